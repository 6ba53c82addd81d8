#pragma once

#include <vector>

#include "axspoof/clip.hpp"

namespace axspoof::rppg {

inline constexpr int kSpectrumBins = 50;
inline constexpr int kResampleLen = 128;   // fixed DFT length for variable clips
inline constexpr int kBandpassTaps = 61;
inline constexpr double kBandLowHz = 0.7;
inline constexpr double kBandHighHz = 4.0;

// Mean channel intensity over the tracked skin patch, per frame.
struct RgbTrace {
    std::vector<double> r, g, b;
    double fps = 0.0;
};

struct ChromSignals {
    std::vector<double> x, y;
    double gamma = 1.0;
    bool gamma_fallback = false;  // sigma(y) was degenerate, gamma forced to 1
};

// 50 frequency-bin magnitudes with unit L2 norm, or all zero for clips
// without measurable pulse energy.
struct RppgSpectrum {
    Tensor f{std::vector<int>{kSpectrumBins}};

    double norm() const { return std::sqrt(f.squared_l2()); }
};

struct ExtractResult {
    RppgSpectrum spectrum;
    double raw_norm = 0.0;  // L2 norm of the 50 bins before normalization
    bool gamma_fallback = false;
};

// Averages the clip over the pixels covered by the projected patch vertices,
// one shape per frame. Throws DataError naming the first frame whose patch
// falls entirely outside the image.
RgbTrace track_region(const VideoClip& clip, const std::vector<face::PosedShape>& shapes,
                      const std::vector<int>& patch_vertices);

// Divides each channel by its temporal mean. Throws on non-positive means.
RgbTrace skin_tone_normalize(const RgbTrace& trace);

// Taps of the zero-phase FIR used by bandpass(): Hamming-windowed sinc,
// passband [0.7, 4.0] Hz, unity gain at the band center, exactly zero at DC.
std::vector<double> bandpass_taps(double fps);

// Applies the filter with reflection padding so output length equals input
// length and the phase is zero. Requires fps >= 8 and at least 32 samples.
std::vector<double> bandpass(const std::vector<double>& signal, double fps);

// Chrominance combination:
//   x = 3r - 2g, y = 1.5r + g - 1.5b, gamma = sigma(x)/sigma(y),
//   p = 3(1 - gamma/2) r - 2(1 + gamma/2) g + (3 gamma/2) b.
// Population standard deviations; degenerate sigma(y) forces gamma = 1 and
// sets the fallback flag instead of failing.
ChromSignals chrom_combine(const std::vector<double>& r_f, const std::vector<double>& g_f,
                           const std::vector<double>& b_f, std::vector<double>* p_out);

// Linearly resamples p to 128 samples spanning the clip, takes DFT magnitude
// bins 1..50 and normalizes to unit L2 norm (all-zero stays zero).
RppgSpectrum spectrum(const std::vector<double>& p, double fps, double* raw_norm = nullptr);

// Full ground-truth pipeline: track -> skin-tone normalize -> bandpass per
// channel -> chrominance combine -> spectrum.
ExtractResult extract(const VideoClip& clip, const std::vector<face::PosedShape>& shapes,
                      const std::vector<int>& patch_vertices);

// Frequency of 1-based spectrum bin k for a clip of t frames at fps.
double bin_frequency_hz(int k, int t_frames, double fps);
// 1-based bin closest to hz (may exceed kSpectrumBins for out-of-band rates).
int frequency_bin(double hz, int t_frames, double fps);

}  // namespace axspoof::rppg

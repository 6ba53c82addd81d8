#include "axspoof/rppg.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "axspoof/common.hpp"

namespace axspoof::rppg {

namespace {

constexpr double kPi = 3.141592653589793238462643383279;

double population_sigma(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::sqrt(var / static_cast<double>(v.size()));
}

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x); }

// Signal value with reflection at the borders (index -1 maps to 1, etc).
double reflect_at(const std::vector<double>& s, long i) {
    const long n = static_cast<long>(s.size());
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    return s[static_cast<std::size_t>(i)];
}

}  // namespace

RgbTrace track_region(const VideoClip& clip, const std::vector<face::PosedShape>& shapes,
                      const std::vector<int>& patch_vertices) {
    if (static_cast<int>(shapes.size()) != clip.t)
        throw ShapeError("track_region: need one shape per frame");
    if (patch_vertices.empty()) throw ContractError("track_region: empty patch vertex list");

    RgbTrace trace;
    trace.fps = clip.fps;
    trace.r.resize(static_cast<std::size_t>(clip.t));
    trace.g.resize(static_cast<std::size_t>(clip.t));
    trace.b.resize(static_cast<std::size_t>(clip.t));

    for (int t = 0; t < clip.t; ++t) {
        const face::PosedShape& s = shapes[static_cast<std::size_t>(t)];
        std::set<std::pair<int, int>> pixels;
        for (int v : patch_vertices) {
            const int x = static_cast<int>(std::floor(s.x(v)));
            const int y = static_cast<int>(std::floor(s.y(v)));
            if (x >= 0 && x < clip.w && y >= 0 && y < clip.h) pixels.insert({y, x});
        }
        if (pixels.empty())
            throw DataError("track_region: patch outside image in frame " + std::to_string(t));
        double r = 0.0, g = 0.0, b = 0.0;
        for (const auto& [y, x] : pixels) {
            r += clip.at(t, y, x, 0);
            g += clip.at(t, y, x, 1);
            b += clip.at(t, y, x, 2);
        }
        const double inv = 1.0 / static_cast<double>(pixels.size());
        trace.r[static_cast<std::size_t>(t)] = r * inv;
        trace.g[static_cast<std::size_t>(t)] = g * inv;
        trace.b[static_cast<std::size_t>(t)] = b * inv;
    }
    return trace;
}

RgbTrace skin_tone_normalize(const RgbTrace& trace) {
    RgbTrace out;
    out.fps = trace.fps;
    const std::vector<double>* in[3] = {&trace.r, &trace.g, &trace.b};
    std::vector<double>* res[3] = {&out.r, &out.g, &out.b};
    const char* names[3] = {"r", "g", "b"};
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0;
        for (double v : *in[c]) mean += v;
        mean /= static_cast<double>(in[c]->size());
        if (!(mean > 0.0))
            throw ContractError(std::string("skin_tone_normalize: channel ") + names[c] +
                                " has non-positive mean");
        res[c]->resize(in[c]->size());
        for (std::size_t i = 0; i < in[c]->size(); ++i) (*res[c])[i] = (*in[c])[i] / mean;
    }
    return out;
}

std::vector<double> bandpass_taps(double fps) {
    if (fps < 8.0)
        throw ContractError("bandpass: fps below 8 Hz puts Nyquist inside the passband");
    const double nyq = fps / 2.0;
    const double lo = kBandLowHz / nyq;
    const double hi = kBandHighHz / nyq;
    const int n = kBandpassTaps;
    const double alpha = 0.5 * (n - 1);
    std::vector<double> h(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double m = i - alpha;
        const double ideal = hi * sinc(hi * m) - lo * sinc(lo * m);
        const double window = 0.54 - 0.46 * std::cos(2.0 * kPi * i / (n - 1));
        h[static_cast<std::size_t>(i)] = ideal * window;
    }
    // Unity gain at the passband center (scipy firwin convention).
    const double center = 0.5 * (lo + hi);
    double accum = 0.0;
    for (int i = 0; i < n; ++i) accum += std::cos(kPi * (i - alpha) * center) * h[static_cast<std::size_t>(i)];
    for (double& v : h) v /= accum;
    // Exact DC rejection: a constant input must map to exactly zero.
    double mean = 0.0;
    for (double v : h) mean += v;
    mean /= n;
    for (double& v : h) v -= mean;
    return h;
}

std::vector<double> bandpass(const std::vector<double>& signal, double fps) {
    if (signal.size() < 32) throw ContractError("bandpass: need at least 32 samples");
    const std::vector<double> h = bandpass_taps(fps);
    const long half = (kBandpassTaps - 1) / 2;
    const long n = static_cast<long>(signal.size());
    std::vector<double> out(signal.size());
    for (long i = 0; i < n; ++i) {
        double acc = 0.0;
        for (long k = 0; k < kBandpassTaps; ++k)
            acc += h[static_cast<std::size_t>(k)] * reflect_at(signal, i + half - k);
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

ChromSignals chrom_combine(const std::vector<double>& r_f, const std::vector<double>& g_f,
                           const std::vector<double>& b_f, std::vector<double>* p_out) {
    if (r_f.size() != g_f.size() || g_f.size() != b_f.size() || r_f.empty())
        throw ShapeError("chrom_combine: channel lengths differ");
    const std::size_t n = r_f.size();
    ChromSignals cs;
    cs.x.resize(n);
    cs.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        cs.x[i] = 3.0 * r_f[i] - 2.0 * g_f[i];
        cs.y[i] = 1.5 * r_f[i] + g_f[i] - 1.5 * b_f[i];
    }
    const double sy = population_sigma(cs.y);
    if (sy < 1e-12) {
        cs.gamma = 1.0;
        cs.gamma_fallback = true;
    } else {
        cs.gamma = population_sigma(cs.x) / sy;
    }
    if (p_out) {
        p_out->resize(n);
        const double cr = 3.0 * (1.0 - cs.gamma / 2.0);
        const double cg = -2.0 * (1.0 + cs.gamma / 2.0);
        const double cb = 1.5 * cs.gamma;
        for (std::size_t i = 0; i < n; ++i)
            (*p_out)[i] = cr * r_f[i] + cg * g_f[i] + cb * b_f[i];
    }
    return cs;
}

RppgSpectrum spectrum(const std::vector<double>& p, double fps, double* raw_norm) {
    (void)fps;  // bins are cycles per clip; see bin_frequency_hz for Hz
    if (p.size() < 50) throw ContractError("spectrum: need at least 50 samples");
    // Resample to exactly kResampleLen samples spanning the clip.
    std::vector<double> rs(kResampleLen);
    const double step = static_cast<double>(p.size() - 1) / (kResampleLen - 1);
    for (int j = 0; j < kResampleLen; ++j) {
        const double pos = j * step;
        const std::size_t lo = std::min(static_cast<std::size_t>(pos), p.size() - 2);
        const double frac = pos - static_cast<double>(lo);
        rs[static_cast<std::size_t>(j)] = (1.0 - frac) * p[lo] + frac * p[lo + 1];
    }
    RppgSpectrum out;
    for (int k = 1; k <= kSpectrumBins; ++k) {
        double re = 0.0, im = 0.0;
        for (int t = 0; t < kResampleLen; ++t) {
            const double a = 2.0 * kPi * k * t / kResampleLen;
            re += rs[static_cast<std::size_t>(t)] * std::cos(a);
            im -= rs[static_cast<std::size_t>(t)] * std::sin(a);
        }
        out.f[static_cast<std::size_t>(k - 1)] = std::hypot(re, im);
    }
    const double norm = out.norm();
    if (raw_norm) *raw_norm = norm;
    if (norm > 1e-9) {
        for (std::size_t i = 0; i < out.f.size(); ++i) out.f[i] /= norm;
    } else {
        for (std::size_t i = 0; i < out.f.size(); ++i) out.f[i] = 0.0;
    }
    return out;
}

ExtractResult extract(const VideoClip& clip, const std::vector<face::PosedShape>& shapes,
                      const std::vector<int>& patch_vertices) {
    const RgbTrace raw = track_region(clip, shapes, patch_vertices);
    const RgbTrace norm = skin_tone_normalize(raw);
    const std::vector<double> r_f = bandpass(norm.r, norm.fps);
    const std::vector<double> g_f = bandpass(norm.g, norm.fps);
    const std::vector<double> b_f = bandpass(norm.b, norm.fps);
    std::vector<double> p;
    const ChromSignals cs = chrom_combine(r_f, g_f, b_f, &p);
    ExtractResult res;
    res.spectrum = spectrum(p, norm.fps, &res.raw_norm);
    res.gamma_fallback = cs.gamma_fallback;
    return res;
}

double bin_frequency_hz(int k, int t_frames, double fps) {
    const double duration_s = (t_frames - 1) / fps;
    return k / duration_s;
}

int frequency_bin(double hz, int t_frames, double fps) {
    const double duration_s = (t_frames - 1) / fps;
    return static_cast<int>(std::lround(hz * duration_s));
}

}  // namespace axspoof::rppg

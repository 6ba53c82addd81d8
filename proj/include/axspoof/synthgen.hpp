#pragma once

#include <array>
#include <cstdint>
#include <memory>

#include "axspoof/dataset.hpp"
#include "axspoof/rng.hpp"

namespace axspoof::synth {

struct SubjectSpec {
    std::vector<double> alpha_id;
    std::array<double, 3> skin_color{0.72, 0.58, 0.48};
    double pulse_amplitude = 0.05;
    double heart_rate_hz = 1.2;  // must stay inside the rPPG passband

    static SubjectSpec sample(const face::FaceBasis& basis, Rng& rng);
    void validate(const face::FaceBasis& basis) const;
};

struct MotionProfile {
    double yaw_amp = 0.0;    // radians
    double pitch_amp = 0.0;  // radians
    double sway_px = 0.0;    // in-plane translation amplitude
    double expr_amp = 0.0;   // expression coefficient amplitude
    double freq_hz = 0.2;

    static MotionProfile none() { return {}; }
    static MotionProfile gentle(Rng& rng);
    bool is_static() const {
        return yaw_amp == 0.0 && pitch_amp == 0.0 && sway_px == 0.0 && expr_amp == 0.0;
    }
};

// Renders a live clip: posed face with depth-dependent shading over a
// textured background, skin modulated by the subject's pulse. Ground-truth
// depth comes from the Z-buffer per frame; the ground-truth rPPG spectrum is
// extracted from the motion-free rendering of the same subject and seed.
VideoClip gen_live(const face::FaceBasis& basis, const SubjectSpec& subject,
                   const MotionProfile& motion, int t, double fps, int h, int w,
                   std::uint64_t seed);

// Renders the subject's static capture on a flat medium. Print: no pulse,
// static paper grain, slow planar warp. Replay: pulse damped to 0.2x plus a
// faint moire pattern. Ground truth is zero depth and zero rPPG.
VideoClip gen_spoof(const face::FaceBasis& basis, const SubjectSpec& subject, Label kind, int t,
                    double fps, int h, int w, std::uint64_t seed);

struct GenSpec {
    int subjects = 4;
    int clips_per_subject = 2;  // live clips; each subject also gets this many
                                // print and replay clips
    int frames = 150;
    double fps = 30.0;
    int size = 64;
    std::uint64_t seed = 0;
    int first_subject = 0;  // offset into the subject stream (for held-out splits)
};

// In-memory dataset whose clips regenerate deterministically on access.
Dataset generate_dataset(const face::FaceBasis& basis, const GenSpec& spec);

}  // namespace axspoof::synth

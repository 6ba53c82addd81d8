#include "axspoof/synthgen.hpp"

#include <algorithm>
#include <cmath>

#include "axspoof/common.hpp"
#include "axspoof/rppg.hpp"

namespace axspoof::synth {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Relative pulse strength per channel (green strongest, as in skin
// reflectance); equal weights would cancel in the chrominance combination.
constexpr double kPulseWeight[3] = {0.33, 0.77, 0.53};

constexpr double kSensorNoise = 0.004;
constexpr double kPaperGrain = 0.035;
constexpr double kMoireAmp = 0.025;
constexpr double kReplayPulseFactor = 0.2;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Deterministic per-pixel noise in [-0.5, 0.5).
double hash_noise(std::uint64_t seed, int a, int b, int c) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(a + 1) * 73856093ULL +
                                                      static_cast<std::uint64_t>(b + 1) * 19349663ULL +
                                                      static_cast<std::uint64_t>(c + 1) * 83492791ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * 0x1.0p-53 - 0.5;
}

struct Backdrop {
    double a[3], bx[3], by[3], phx[3], phy[3];

    static Backdrop sample(Rng& rng) {
        Backdrop bg;
        for (int c = 0; c < 3; ++c) {
            bg.a[c] = 0.12 + 0.08 * rng.uniform();
            bg.bx[c] = rng.uniform(0.05, 0.22);
            bg.by[c] = rng.uniform(0.05, 0.22);
            bg.phx[c] = rng.uniform(0.0, kTwoPi);
            bg.phy[c] = rng.uniform(0.0, kTwoPi);
        }
        return bg;
    }

    double at(int x, int y, int c) const {
        return 0.42 + bg_wave(x, y, c);
    }

  private:
    double bg_wave(int x, int y, int c) const {
        return a[c] * std::sin(bx[c] * x + phx[c]) * std::sin(by[c] * y + phy[c]);
    }
};

struct PoseState {
    face::Pose pose;
    std::vector<double> alpha_exp;
};

PoseState pose_at(const face::FaceBasis& basis, const MotionProfile& motion, int t, double fps,
                  int h, int w, const std::vector<double>& expr_phase) {
    PoseState st;
    st.pose = face::canonical_pose(h, w);
    st.alpha_exp.assign(basis.exp_bases.size(), 0.0);
    if (motion.is_static()) return st;

    const double ph = kTwoPi * motion.freq_hz * t / fps;
    const double yaw = motion.yaw_amp * std::sin(ph);
    const double pitch = motion.pitch_amp * std::sin(ph + 1.3);
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    const double cp = std::cos(pitch), sp = std::sin(pitch);
    // R = Rx(pitch) * Ry(yaw)
    st.pose.rotation = {cy, 0, sy, sp * sy, cp, -sp * cy, -cp * sy, sp, cp * cy};
    st.pose.translation[0] += motion.sway_px * std::sin(ph + 0.7);
    st.pose.translation[1] += 0.6 * motion.sway_px * std::cos(ph + 0.2);
    for (std::size_t k = 0; k < st.alpha_exp.size(); ++k)
        st.alpha_exp[k] = motion.expr_amp * std::sin(ph * (1.0 + 0.3 * k) + expr_phase[k]);
    return st;
}

// Splats the posed, depth-normalized shape into an image-resolution z-buffer.
// zbuf < 0 marks background.
void splat_zbuffer(const face::PosedShape& shape, int h, int w, std::vector<double>& zbuf) {
    zbuf.assign(static_cast<std::size_t>(h) * w, -1.0);
    const int radius = std::max(1, w / 64);
    const int q = shape.vertex_count();
    for (int v = 0; v < q; ++v) {
        const int px = static_cast<int>(std::floor(shape.x(v)));
        const int py = static_cast<int>(std::floor(shape.y(v)));
        const double z = shape.z(v);
        for (int dy = -radius + 1; dy < radius; ++dy)
            for (int dx = -radius + 1; dx < radius; ++dx) {
                const int x = px + dx, y = py + dy;
                if (x < 0 || x >= w || y < 0 || y >= h) continue;
                double& cell = zbuf[static_cast<std::size_t>(y) * w + x];
                cell = std::max(cell, z);
            }
    }
}

struct RenderSeeds {
    std::uint64_t noise;
    double pulse_phase;
    Backdrop backdrop;
    std::vector<double> expr_phase;
    double warp_phase;
    double moire_phase;
    double moire_fx, moire_fy;
};

// All stochastic choices are drawn here in a fixed order so that a clip and
// its motion-free twin share pulse phase, backdrop and noise exactly.
RenderSeeds draw_seeds(const face::FaceBasis& basis, std::uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xc11b));
    RenderSeeds rs;
    rs.noise = rng.next_u64();
    rs.pulse_phase = rng.uniform(0.0, kTwoPi);
    rs.backdrop = Backdrop::sample(rng);
    rs.expr_phase.resize(basis.exp_bases.size());
    for (double& p : rs.expr_phase) p = rng.uniform(0.0, kTwoPi);
    rs.warp_phase = rng.uniform(0.0, kTwoPi);
    rs.moire_phase = rng.uniform(0.0, kTwoPi);
    rs.moire_fx = rng.uniform(1.9, 2.6);
    rs.moire_fy = rng.uniform(0.7, 1.2);
    return rs;
}

VideoClip render_live(const face::FaceBasis& basis, const SubjectSpec& subject,
                      const MotionProfile& motion, int t_frames, double fps, int h, int w,
                      std::uint64_t seed, bool with_sensor_noise) {
    const RenderSeeds rs = draw_seeds(basis, seed);
    VideoClip clip;
    clip.t = t_frames;
    clip.h = h;
    clip.w = w;
    clip.fps = fps;
    clip.label = Label::live;
    clip.heart_rate_hz = subject.heart_rate_hz;
    clip.frames.resize(static_cast<std::size_t>(t_frames) * h * w * 3);
    clip.frame_params.reserve(static_cast<std::size_t>(t_frames));
    clip.gt_depth.reserve(static_cast<std::size_t>(t_frames));

    std::vector<double> zbuf;
    for (int t = 0; t < t_frames; ++t) {
        const PoseState st = pose_at(basis, motion, t, fps, h, w, rs.expr_phase);
        const face::ShapeParams params{subject.alpha_id, st.alpha_exp};
        const face::PosedShape posed =
            face::normalize_depth(face::pose_transform(face::synthesize_shape(basis, params),
                                                       st.pose));
        clip.gt_depth.push_back(face::render_depth(posed, h, w).values);
        clip.frame_params.push_back({params, st.pose});

        splat_zbuffer(posed, h, w, zbuf);
        double pulse[3];
        const double beat = std::sin(kTwoPi * subject.heart_rate_hz * t / fps + rs.pulse_phase);
        for (int c = 0; c < 3; ++c)
            pulse[c] = 1.0 + subject.pulse_amplitude * kPulseWeight[c] * beat;

        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double z = zbuf[static_cast<std::size_t>(y) * w + x];
                for (int c = 0; c < 3; ++c) {
                    double v;
                    if (z >= 0.0) {
                        const double shade = 0.55 + 0.45 * z;
                        v = subject.skin_color[static_cast<std::size_t>(c)] * shade * pulse[c];
                    } else {
                        v = rs.backdrop.at(x, y, c);
                    }
                    if (with_sensor_noise)
                        v += kSensorNoise * hash_noise(rs.noise, x, y, c + 3 * t);
                    clip.at(t, y, x, c) = static_cast<float>(clamp01(v));
                }
            }
    }
    return clip;
}

}  // namespace

SubjectSpec SubjectSpec::sample(const face::FaceBasis& basis, Rng& rng) {
    SubjectSpec s;
    s.alpha_id.resize(basis.id_bases.size());
    for (double& a : s.alpha_id) a = rng.normal(0.0, 0.8);
    const double base = rng.uniform(0.45, 0.72);
    s.skin_color = {clamp01(base + 0.12 + 0.03 * rng.normal()),
                    clamp01(base + 0.02 * rng.normal()),
                    clamp01(base - 0.11 + 0.03 * rng.normal())};
    s.pulse_amplitude = rng.uniform(0.035, 0.065);
    s.heart_rate_hz = rng.uniform(0.8, 3.0);
    return s;
}

void SubjectSpec::validate(const face::FaceBasis& basis) const {
    if (alpha_id.size() != basis.id_bases.size())
        throw ShapeError("subject: alpha_id length mismatch");
    if (heart_rate_hz < rppg::kBandLowHz || heart_rate_hz > rppg::kBandHighHz)
        throw ContractError("subject: heart rate outside the rPPG passband");
}

MotionProfile MotionProfile::gentle(Rng& rng) {
    MotionProfile m;
    m.yaw_amp = rng.uniform(0.06, 0.16);
    m.pitch_amp = rng.uniform(0.03, 0.09);
    m.sway_px = rng.uniform(0.5, 1.8);
    m.expr_amp = rng.uniform(0.2, 0.6);
    m.freq_hz = rng.uniform(0.10, 0.25);
    return m;
}

VideoClip gen_live(const face::FaceBasis& basis, const SubjectSpec& subject,
                   const MotionProfile& motion, int t, double fps, int h, int w,
                   std::uint64_t seed) {
    subject.validate(basis);
    VideoClip clip = render_live(basis, subject, motion, t, fps, h, w, seed, true);
    // Ground-truth spectrum from the motion-free rendering of the same
    // subject and seed (the clip itself when it is already static).
    if (motion.is_static()) {
        clip.gt_rppg = rppg::extract(clip, shapes_for(clip, basis), basis.forehead).spectrum.f;
    } else {
        const VideoClip twin = render_live(basis, subject, MotionProfile::none(), t, fps, h, w,
                                           seed, true);
        clip.gt_rppg = rppg::extract(twin, shapes_for(twin, basis), basis.forehead).spectrum.f;
    }
    return clip;
}

VideoClip gen_spoof(const face::FaceBasis& basis, const SubjectSpec& subject, Label kind, int t,
                    double fps, int h, int w, std::uint64_t seed) {
    subject.validate(basis);
    if (kind == Label::live) throw ContractError("gen_spoof: kind must be a spoof label");
    const RenderSeeds rs = draw_seeds(basis, seed);

    // Static capture of the subject: one clean frame at canonical pose.
    const VideoClip capture = render_live(basis, subject, MotionProfile::none(), 1, fps, h, w,
                                          seed, false);
    // Skin mask for the damped replay pulse.
    const face::ShapeParams params{subject.alpha_id,
                                   std::vector<double>(basis.exp_bases.size(), 0.0)};
    const face::PosedShape posed = face::normalize_depth(
        face::pose_transform(face::synthesize_shape(basis, params), face::canonical_pose(h, w)));
    std::vector<double> zbuf;
    splat_zbuffer(posed, h, w, zbuf);

    VideoClip clip;
    clip.t = t;
    clip.h = h;
    clip.w = w;
    clip.fps = fps;
    clip.label = kind;
    clip.frames.resize(static_cast<std::size_t>(t) * h * w * 3);
    // The medium shows the captured face; its fitted shape is the static
    // canonical pose. Depth and rPPG ground truth are identically zero.
    clip.frame_params.assign(static_cast<std::size_t>(t),
                             {params, face::canonical_pose(h, w)});
    clip.gt_depth.assign(static_cast<std::size_t>(t),
                         Tensor({face::kMapSize, face::kMapSize}));
    for (std::size_t i = 0; i < clip.gt_rppg.size(); ++i) clip.gt_rppg[i] = 0.0;

    const double cx = w / 2.0, cy = h / 2.0;
    for (int ti = 0; ti < t; ++ti) {
        double ca = 1.0, sa = 0.0, scale = 1.0, ox = 0.0, oy = 0.0;
        if (kind == Label::print_spoof) {
            const double ph = kTwoPi * 0.15 * ti / fps + rs.warp_phase;
            const double ang = 0.010 * std::sin(ph);
            ca = std::cos(ang);
            sa = std::sin(ang);
            scale = 1.0 + 0.006 * std::sin(ph + 0.9);
            ox = 1.5 * std::sin(ph + 0.4);
            oy = 1.2 * std::cos(ph + 1.1);
        }
        double pulse[3] = {1.0, 1.0, 1.0};
        if (kind == Label::replay_spoof) {
            const double beat =
                std::sin(kTwoPi * subject.heart_rate_hz * ti / fps + rs.pulse_phase);
            for (int c = 0; c < 3; ++c)
                pulse[c] = 1.0 + kReplayPulseFactor * subject.pulse_amplitude *
                                     kPulseWeight[c] * beat;
        }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                // Planar warp: sample the capture with a slow rigid wobble.
                const double rx = (x - cx) / scale, ry = (y - cy) / scale;
                const double sxf = ca * rx + sa * ry + cx + ox;
                const double syf = -sa * rx + ca * ry + cy + oy;
                const int x0 = std::min(std::max(static_cast<int>(std::floor(sxf)), 0), w - 2);
                const int y0 = std::min(std::max(static_cast<int>(std::floor(syf)), 0), h - 2);
                const double fx = std::min(std::max(sxf - x0, 0.0), 1.0);
                const double fy = std::min(std::max(syf - y0, 0.0), 1.0);
                const bool skin = zbuf[static_cast<std::size_t>(y0) * w + x0] >= 0.0;
                for (int c = 0; c < 3; ++c) {
                    double v = (1 - fy) * ((1 - fx) * capture.at(0, y0, x0, c) +
                                           fx * capture.at(0, y0, x0 + 1, c)) +
                               fy * ((1 - fx) * capture.at(0, y0 + 1, x0, c) +
                                     fx * capture.at(0, y0 + 1, x0 + 1, c));
                    if (skin) v *= pulse[c];
                    if (kind == Label::print_spoof)
                        v += kPaperGrain * hash_noise(rs.noise, x0, y0, 7 + c);
                    else
                        v *= 1.0 + kMoireAmp * std::sin(rs.moire_fx * x + rs.moire_fy * y +
                                                        rs.moire_phase + 0.2 * ti);
                    v += kSensorNoise * hash_noise(rs.noise, x, y, c + 3 * ti);
                    clip.at(ti, y, x, c) = static_cast<float>(clamp01(v));
                }
            }
    }
    return clip;
}

Dataset generate_dataset(const face::FaceBasis& basis, const GenSpec& spec) {
    if (spec.subjects < 1 || spec.clips_per_subject < 1 || spec.frames < 1 || spec.size < 1)
        throw ContractError("generate_dataset: sizes must be positive");
    Dataset data;
    data.basis = basis;
    auto shared = std::make_shared<face::FaceBasis>(basis);

    for (int s = 0; s < spec.subjects; ++s) {
        const int subject_id = spec.first_subject + s;
        Rng srng(Rng::mix(spec.seed, 0x5b1ec7 + static_cast<std::uint64_t>(subject_id)));
        const SubjectSpec subject = SubjectSpec::sample(*shared, srng);

        for (int k = 0; k < spec.clips_per_subject; ++k) {
            const std::uint64_t clip_seed =
                Rng::mix(spec.seed, static_cast<std::uint64_t>(subject_id) * 977 + k);
            Rng mrng(Rng::mix(clip_seed, 0x307103));
            const MotionProfile motion = MotionProfile::gentle(mrng);
            char id[64];

            std::snprintf(id, sizeof(id), "s%03d_live_%d", subject_id, k);
            data.clips.push_back(
                {id, Label::live, spec.frames, subject.heart_rate_hz,
                 [shared, subject, motion, spec, clip_seed] {
                     return gen_live(*shared, subject, motion, spec.frames, spec.fps, spec.size,
                                     spec.size, clip_seed);
                 }});

            std::snprintf(id, sizeof(id), "s%03d_print_%d", subject_id, k);
            data.clips.push_back({id, Label::print_spoof, spec.frames, 0.0,
                                  [shared, subject, spec, clip_seed] {
                                      return gen_spoof(*shared, subject, Label::print_spoof,
                                                       spec.frames, spec.fps, spec.size,
                                                       spec.size, Rng::mix(clip_seed, 2));
                                  }});

            std::snprintf(id, sizeof(id), "s%03d_replay_%d", subject_id, k);
            data.clips.push_back({id, Label::replay_spoof, spec.frames, 0.0,
                                  [shared, subject, spec, clip_seed] {
                                      return gen_spoof(*shared, subject, Label::replay_spoof,
                                                       spec.frames, spec.fps, spec.size,
                                                       spec.size, Rng::mix(clip_seed, 3));
                                  }});
        }
    }
    return data;
}

}  // namespace axspoof::synth

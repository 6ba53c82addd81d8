#pragma once

#include <string>
#include <vector>

#include "axspoof/face_model.hpp"
#include "axspoof/tensor.hpp"

namespace axspoof {

enum class Label { live, print_spoof, replay_spoof };

inline bool is_live(Label l) { return l == Label::live; }

inline const char* label_name(Label l) {
    switch (l) {
        case Label::live: return "live";
        case Label::print_spoof: return "print";
        case Label::replay_spoof: return "replay";
    }
    return "?";
}

Label label_from_name(const std::string& name);

struct FrameParams {
    face::ShapeParams shape;
    face::Pose pose;
};

// A video clip with its supervision targets. Frames are row-major
// T x H x W x 3 floats in [0,1]. Spoof clips carry all-zero depth maps and an
// all-zero rPPG target; live clips carry a unit-norm rPPG target.
struct VideoClip {
    int t = 0, h = 0, w = 0;
    double fps = 30.0;
    Label label = Label::live;
    std::vector<float> frames;
    std::vector<FrameParams> frame_params;  // one per frame
    double heart_rate_hz = 0.0;             // live only
    std::vector<Tensor> gt_depth;           // per frame, [32,32]
    Tensor gt_rppg{std::vector<int>{50}};   // [50]

    float at(int ti, int y, int x, int c) const {
        return frames[((static_cast<std::size_t>(ti) * h + y) * w + x) * 3 +
                      static_cast<std::size_t>(c)];
    }
    float& at(int ti, int y, int x, int c) {
        return frames[((static_cast<std::size_t>(ti) * h + y) * w + x) * 3 +
                      static_cast<std::size_t>(c)];
    }
};

// Posed (image-coordinate) shapes for every frame of a clip.
std::vector<face::PosedShape> shapes_for(const VideoClip& clip, const face::FaceBasis& basis);

}  // namespace axspoof

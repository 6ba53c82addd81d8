#pragma once

#include <functional>
#include <string>
#include <vector>

#include "axspoof/clip.hpp"

namespace axspoof {

// Lazy handle to one clip. load() must be deterministic: it either reads the
// clip from disk or regenerates it from a fixed seed.
struct ClipRef {
    std::string id;
    Label label = Label::live;
    int frames = 0;
    double heart_rate_hz = 0.0;
    std::function<VideoClip()> load;
};

struct Dataset {
    std::vector<ClipRef> clips;
    face::FaceBasis basis;

    bool has_ground_truth() const { return !clips.empty(); }
};

// Posed shape of a single frame.
face::PosedShape shape_for_frame(const VideoClip& clip, const face::FaceBasis& basis, int t);

}  // namespace axspoof

#include "axspoof/clip.hpp"

#include "axspoof/common.hpp"
#include "axspoof/dataset.hpp"

namespace axspoof {

Label label_from_name(const std::string& name) {
    if (name == "live") return Label::live;
    if (name == "print") return Label::print_spoof;
    if (name == "replay") return Label::replay_spoof;
    throw DataError("unknown label: " + name);
}

std::vector<face::PosedShape> shapes_for(const VideoClip& clip, const face::FaceBasis& basis) {
    if (clip.frame_params.size() != static_cast<std::size_t>(clip.t))
        throw DataError("clip is missing per-frame shape parameters");
    std::vector<face::PosedShape> shapes;
    shapes.reserve(clip.frame_params.size());
    for (const FrameParams& fp : clip.frame_params)
        shapes.push_back(face::pose_transform(face::synthesize_shape(basis, fp.shape), fp.pose));
    return shapes;
}

face::PosedShape shape_for_frame(const VideoClip& clip, const face::FaceBasis& basis, int t) {
    if (t < 0 || t >= static_cast<int>(clip.frame_params.size()))
        throw DataError("shape_for_frame: frame index out of range");
    const FrameParams& fp = clip.frame_params[static_cast<std::size_t>(t)];
    return face::pose_transform(face::synthesize_shape(basis, fp.shape), fp.pose);
}

}  // namespace axspoof

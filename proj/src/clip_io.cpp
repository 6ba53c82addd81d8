#include "axspoof/clip_io.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "axspoof/common.hpp"
#include "axspoof/container.hpp"

namespace axspoof::io {

namespace fs = std::filesystem;
using nlohmann::json;

void create_directories(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw DataError("cannot create directory " + path + ": " + ec.message());
}

namespace {

json pose_to_json(const face::Pose& p) {
    json j;
    j["s"] = p.s;
    j["R"] = p.rotation;
    j["t"] = p.translation;
    return j;
}

face::Pose pose_from_json(const json& j) {
    face::Pose p;
    p.s = j.at("s").get<double>();
    const auto r = j.at("R").get<std::vector<double>>();
    const auto t = j.at("t").get<std::vector<double>>();
    if (r.size() != 9 || t.size() != 3) throw DataError("meta.json: malformed pose");
    std::copy(r.begin(), r.end(), p.rotation.begin());
    std::copy(t.begin(), t.end(), p.translation.begin());
    return p;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

json parse_json_file(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw DataError("malformed JSON in " + path + ": " + e.what());
    }
}

}  // namespace

void save_clip(const VideoClip& clip, const std::string& dir) {
    create_directories(dir);

    // frames.bin: raw little-endian f32. x86-64 hosts write directly.
    std::string bytes(clip.frames.size() * 4, '\0');
    std::memcpy(bytes.data(), clip.frames.data(), bytes.size());
    atomic_write(dir + "/frames.bin", bytes);

    Container depth;
    for (std::size_t t = 0; t < clip.gt_depth.size(); ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "depth_%04zu", t);
        depth.put(name, clip.gt_depth[t]);
    }
    depth.save(dir + "/gt_depth.axsp");

    Container rppg;
    rppg.put("rppg", clip.gt_rppg);
    rppg.save(dir + "/gt_rppg.axsp");

    json meta;
    meta["frames"] = clip.t;
    meta["height"] = clip.h;
    meta["width"] = clip.w;
    meta["fps"] = clip.fps;
    meta["label"] = label_name(clip.label);
    meta["heart_rate_hz"] = clip.heart_rate_hz;
    meta["gt_depth"] = "gt_depth.axsp";
    meta["gt_rppg"] = "gt_rppg.axsp";
    json params = json::array();
    for (const FrameParams& fp : clip.frame_params) {
        json j;
        j["alpha_id"] = fp.shape.alpha_id;
        j["alpha_exp"] = fp.shape.alpha_exp;
        j["pose"] = pose_to_json(fp.pose);
        params.push_back(std::move(j));
    }
    meta["frame_params"] = std::move(params);
    atomic_write(dir + "/meta.json", meta.dump(1));
}

VideoClip load_clip(const std::string& dir) {
    const json meta = parse_json_file(dir + "/meta.json");
    VideoClip clip;
    try {
        clip.t = meta.at("frames").get<int>();
        clip.h = meta.at("height").get<int>();
        clip.w = meta.at("width").get<int>();
        clip.fps = meta.at("fps").get<double>();
        clip.label = label_from_name(meta.at("label").get<std::string>());
        clip.heart_rate_hz = meta.at("heart_rate_hz").get<double>();
        for (const json& j : meta.at("frame_params")) {
            FrameParams fp;
            fp.shape.alpha_id = j.at("alpha_id").get<std::vector<double>>();
            fp.shape.alpha_exp = j.at("alpha_exp").get<std::vector<double>>();
            fp.pose = pose_from_json(j.at("pose"));
            clip.frame_params.push_back(std::move(fp));
        }
    } catch (const json::exception& e) {
        throw DataError("meta.json in " + dir + ": " + e.what());
    }
    if (clip.t <= 0 || clip.h <= 0 || clip.w <= 0 ||
        clip.frame_params.size() != static_cast<std::size_t>(clip.t))
        throw DataError("meta.json in " + dir + ": inconsistent dimensions");

    const std::string bytes = read_file(dir + "/frames.bin");
    const std::size_t expect = static_cast<std::size_t>(clip.t) * clip.h * clip.w * 3 * 4;
    if (bytes.size() != expect)
        throw DataError("frames.bin in " + dir + " has " + std::to_string(bytes.size()) +
                        " bytes, expected " + std::to_string(expect));
    clip.frames.resize(expect / 4);
    std::memcpy(clip.frames.data(), bytes.data(), bytes.size());

    const Container depth = Container::load(dir + "/" + meta.at("gt_depth").get<std::string>());
    clip.gt_depth.reserve(static_cast<std::size_t>(clip.t));
    for (int t = 0; t < clip.t; ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "depth_%04d", t);
        clip.gt_depth.push_back(depth.tensor(name));
    }
    const Container rppg = Container::load(dir + "/" + meta.at("gt_rppg").get<std::string>());
    clip.gt_rppg = rppg.tensor("rppg");
    return clip;
}

void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
    json clips = json::array();
    for (const ManifestEntry& e : entries) {
        json j;
        j["dir"] = e.dir;
        j["id"] = e.id;
        j["label"] = label_name(e.label);
        j["frames"] = e.frames;
        j["fps"] = e.fps;
        j["size"] = e.size;
        j["heart_rate_hz"] = e.heart_rate_hz;
        clips.push_back(std::move(j));
    }
    json root;
    root["clips"] = std::move(clips);
    atomic_write(path, root.dump(1));
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    const json root = parse_json_file(path);
    std::vector<ManifestEntry> entries;
    try {
        for (const json& j : root.at("clips")) {
            ManifestEntry e;
            e.dir = j.at("dir").get<std::string>();
            e.id = j.at("id").get<std::string>();
            e.label = label_from_name(j.at("label").get<std::string>());
            e.frames = j.at("frames").get<int>();
            e.fps = j.at("fps").get<double>();
            e.size = j.at("size").get<int>();
            e.heart_rate_hz = j.at("heart_rate_hz").get<double>();
            entries.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw DataError("manifest " + path + ": " + e.what());
    }
    return entries;
}

void write_dataset(const Dataset& data, const std::string& root) {
    create_directories(root);
    face::save_basis(data.basis, root + "/basis.axsp");
    std::vector<ManifestEntry> manifest;
    for (std::size_t i = 0; i < data.clips.size(); ++i) {
        const ClipRef& ref = data.clips[i];
        char name[32];
        std::snprintf(name, sizeof(name), "clip_%04zu", i);
        const VideoClip clip = ref.load();
        save_clip(clip, root + "/" + name);
        manifest.push_back({name, ref.id, clip.label, clip.t, clip.fps, clip.w,
                            clip.heart_rate_hz});
    }
    save_manifest(manifest, root + "/manifest.json");
}

Dataset load_dataset(const std::string& root) {
    Dataset data;
    data.basis = face::load_basis(root + "/basis.axsp");
    for (const ManifestEntry& e : load_manifest(root + "/manifest.json")) {
        const std::string dir = root + "/" + e.dir;
        data.clips.push_back({e.id, e.label, e.frames, e.heart_rate_hz,
                              [dir] { return load_clip(dir); }});
    }
    if (data.clips.empty()) throw DataError("dataset " + root + " has no clips");
    return data;
}

void write_pgm(const Tensor& map, const std::string& path) {
    if (map.rank() != 2) throw ShapeError("write_pgm: expects a 2-D map");
    const int h = map.dim(0), w = map.dim(1);
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (std::size_t i = 0; i < map.size(); ++i) {
        const double v = std::min(1.0, std::max(0.0, map[i]));
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
    atomic_write(path, out);
}

void write_ppm(const VideoClip& clip, int frame, const std::string& path) {
    if (frame < 0 || frame >= clip.t) throw ShapeError("write_ppm: frame out of range");
    std::string out =
        "P6\n" + std::to_string(clip.w) + " " + std::to_string(clip.h) + "\n255\n";
    for (int y = 0; y < clip.h; ++y)
        for (int x = 0; x < clip.w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::min(1.0f, std::max(0.0f, clip.at(frame, y, x, c)));
                out.push_back(
                    static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
            }
    atomic_write(path, out);
}

}  // namespace axspoof::io

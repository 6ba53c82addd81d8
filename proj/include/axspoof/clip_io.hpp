#pragma once

#include <string>
#include <vector>

#include "axspoof/dataset.hpp"

namespace axspoof::io {

// Clip directory layout: frames.bin (raw little-endian f32, T x H x W x 3,
// values in [0,1]) plus meta.json (dims, fps, label, heart rate, per-frame
// shape and pose parameters, gt tensor paths). Ground truth lives in AXSP
// containers next to them.
void save_clip(const VideoClip& clip, const std::string& dir);
VideoClip load_clip(const std::string& dir);

struct ManifestEntry {
    std::string dir;  // clip directory, relative to the dataset root
    std::string id;
    Label label = Label::live;
    int frames = 0;
    double fps = 30.0;
    int size = 0;
    double heart_rate_hz = 0.0;
};

// Dataset root layout: manifest.json, basis.axsp, one directory per clip.
void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);
std::vector<ManifestEntry> load_manifest(const std::string& path);

// Materializes a generated dataset to disk.
void write_dataset(const Dataset& data, const std::string& root);

// Lazy dataset over a directory written by write_dataset / the gen-data
// command.
Dataset load_dataset(const std::string& root);

// Binary PGM (P5) of a [H,W] tensor; values clamped to [0,1] map to 0..255.
void write_pgm(const Tensor& map, const std::string& path);
// Binary PPM (P6) of one clip frame.
void write_ppm(const VideoClip& clip, int frame, const std::string& path);

void create_directories(const std::string& path);

}  // namespace axspoof::io

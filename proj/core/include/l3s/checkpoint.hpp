#pragma once

#include <filesystem>
#include <vector>

#include "l3s/guidance.hpp"
#include "l3s/perceptual.hpp"
#include "l3s/sketch.hpp"

namespace l3s {

// Binary checkpoints. Little-endian; u32 header fields and f32 payloads, so
// loading rounds parameters to single precision.
//
//   "L3SG" u32 version, encoder, net shape, u32 n, n x 3 points, net params
//   "L3SS" u32 version, encoder, suppression, u32 n, 4n x 3 control points,
//          n x 3 anchors, rotation / translation / local nets
//
// An encoder is u32 Ls, u32 Lt, f32 center[3], f32 half extent. A net is
// u32 input, width, depth, i32 skip, u32 output, then every layer's weight
// (row-major) and bias.

void save_guidance(const GuidanceModel& model, const std::filesystem::path& path);
GuidanceModel load_guidance(const std::filesystem::path& path);
void save_sketch(const SketchModel& model, const std::filesystem::path& path);
SketchModel load_sketch(const std::filesystem::path& path);

// Feature tensors: "L3SF" u32 count, then per tensor u32 ndims, u32 dims[],
// f32 payload (row-major). Probes are 2-D.
void write_feature_file(const std::vector<Mat>& probes, const std::filesystem::path& path);
std::vector<Mat> read_feature_file(const std::filesystem::path& path);
/// Loads every "frame_<index>.l3sf" in `dir` into a store keyed by index.
FeatureStore load_feature_store(const std::filesystem::path& dir);

}  // namespace l3s

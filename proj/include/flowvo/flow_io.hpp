#pragma once

#include <filesystem>

#include "flowvo/image.hpp"

namespace flowvo {

// Middlebury .flo: float magic 202021.25, int32 width/height, interleaved
// little-endian float (u, v) pairs, row-major.
FlowField read_flo(const std::filesystem::path& path);
void write_flo(const FlowField& flow, const std::filesystem::path& path);

// KITTI flow PNG: 16-bit RGB, R/G = (value * 64 + 2^15), B = validity.
FlowField read_kitti_flow_png(const std::filesystem::path& path);
void write_kitti_flow_png(const FlowField& flow, const std::filesystem::path& path);

// Dispatch on file extension (.flo / .png).
FlowField read_flow(const std::filesystem::path& path);

// Depth raster: "FVDM", uint32 width/height, float32 scale, row-major float32
// depths with NaN marking invalid pixels. Little-endian throughout.
DepthMap read_depth_raster(const std::filesystem::path& path, float* scale = nullptr);
void write_depth_raster(const DepthMap& depth, const std::filesystem::path& path,
                        float scale = 1.0f);

// KITTI disparity PNG: 16-bit grayscale, disparity * 256, zero = invalid.
Grid<double> read_kitti_disparity_png(const std::filesystem::path& path);
void write_kitti_disparity_png(const Grid<double>& disparity,
                               const std::filesystem::path& path);

// Single-channel float raster ("FVSM" header), used for rigidness-sum dumps.
Grid<double> read_scalar_raster(const std::filesystem::path& path);
void write_scalar_raster(const Grid<double>& grid, const std::filesystem::path& path);

}  // namespace flowvo

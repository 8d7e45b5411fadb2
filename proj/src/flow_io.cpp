#include "flowvo/flow_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <memory>

#include <png.h>

#include "flowvo/errors.hpp"

namespace flowvo {

namespace {

constexpr float kFloMagic = 202021.25f;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

template <typename T>
void read_raw(std::FILE* f, T* dst, size_t count, const std::filesystem::path& path) {
  if (std::fread(dst, sizeof(T), count, f) != count) {
    throw IoError("truncated file " + path.string());
  }
}

template <typename T>
void write_raw(std::FILE* f, const T* src, size_t count, const std::filesystem::path& path) {
  if (std::fwrite(src, sizeof(T), count, f) != count) {
    throw IoError("failed writing " + path.string());
  }
}

// 16-bit PNG io, values big-endian in the file per the PNG spec.
struct Png16 {
  int width = 0, height = 0, channels = 0;
  std::vector<uint16_t> data;  // interleaved

  uint16_t at(int x, int y, int c) const {
    return data[(size_t(y) * width + x) * channels + c];
  }
};

Png16 read_png16(const std::filesystem::path& path, int expected_channels) {
  FilePtr f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png decode failed for " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);

  Png16 out;
  out.width = int(png_get_image_width(png, info));
  out.height = int(png_get_image_height(png, info));
  const int bit_depth = png_get_bit_depth(png, info);
  out.channels = int(png_get_channels(png, info));
  if (bit_depth != 16 || out.channels != expected_channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unexpected png layout in " + path.string());
  }
  out.data.resize(size_t(out.width) * out.height * out.channels);
  std::vector<png_bytep> rows(out.height);
  std::vector<uint8_t> raw(size_t(out.width) * out.height * out.channels * 2);
  for (int y = 0; y < out.height; ++y)
    rows[y] = raw.data() + size_t(y) * out.width * out.channels * 2;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  for (size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = uint16_t((raw[2 * i] << 8) | raw[2 * i + 1]);
  }
  return out;
}

void write_png16(const Png16& img, const std::filesystem::path& path) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png encode failed for " + path.string());
  }
  png_init_io(png, f.get());
  const int color_type = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, img.width, img.height, 16, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<uint8_t> raw(size_t(img.width) * img.height * img.channels * 2);
  for (size_t i = 0; i < img.data.size(); ++i) {
    raw[2 * i] = uint8_t(img.data[i] >> 8);
    raw[2 * i + 1] = uint8_t(img.data[i] & 0xff);
  }
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = raw.data() + size_t(y) * img.width * img.channels * 2;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

FlowField read_flo(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  float magic;
  read_raw(f.get(), &magic, 1, path);
  if (magic != kFloMagic) throw IoError("bad-magic: not a .flo file: " + path.string());
  int32_t w, h;
  read_raw(f.get(), &w, 1, path);
  read_raw(f.get(), &h, 1, path);
  if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16) {
    throw IoError("dimension-mismatch: implausible .flo size in " + path.string());
  }
  FlowField flow(w, h);
  std::vector<float> buf(size_t(w) * 2);
  for (int y = 0; y < h; ++y) {
    read_raw(f.get(), buf.data(), buf.size(), path);
    for (int x = 0; x < w; ++x) {
      flow.u[flow.index(x, y)] = buf[2 * x];
      flow.v[flow.index(x, y)] = buf[2 * x + 1];
    }
  }
  return flow;
}

void write_flo(const FlowField& flow, const std::filesystem::path& path) {
  FilePtr f = open_file(path, "wb");
  write_raw(f.get(), &kFloMagic, 1, path);
  const int32_t w = flow.width, h = flow.height;
  write_raw(f.get(), &w, 1, path);
  write_raw(f.get(), &h, 1, path);
  std::vector<float> buf(size_t(w) * 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      buf[2 * x] = float(flow.u[flow.index(x, y)]);
      buf[2 * x + 1] = float(flow.v[flow.index(x, y)]);
    }
    write_raw(f.get(), buf.data(), buf.size(), path);
  }
}

FlowField read_kitti_flow_png(const std::filesystem::path& path) {
  const Png16 img = read_png16(path, 3);
  FlowField flow(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const size_t i = flow.index(x, y);
      flow.u[i] = (double(img.at(x, y, 0)) - 32768.0) / 64.0;
      flow.v[i] = (double(img.at(x, y, 1)) - 32768.0) / 64.0;
      flow.valid[i] = img.at(x, y, 2) > 0 ? 1 : 0;
    }
  }
  return flow;
}

void write_kitti_flow_png(const FlowField& flow, const std::filesystem::path& path) {
  Png16 img;
  img.width = flow.width;
  img.height = flow.height;
  img.channels = 3;
  img.data.resize(size_t(flow.width) * flow.height * 3);
  auto encode = [](double v) {
    const double e = double(std::llround(v * 64.0)) + 32768.0;
    return uint16_t(std::clamp(e, 0.0, 65535.0));
  };
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      const size_t i = flow.index(x, y);
      img.data[i * 3 + 0] = encode(flow.u[i]);
      img.data[i * 3 + 1] = encode(flow.v[i]);
      img.data[i * 3 + 2] = flow.valid[i] ? 1 : 0;
    }
  }
  write_png16(img, path);
}

FlowField read_flow(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".flo") return read_flo(path);
  if (ext == ".png") return read_kitti_flow_png(path);
  throw IoError("unknown flow format: " + path.string());
}

namespace {
constexpr char kDepthMagic[4] = {'F', 'V', 'D', 'M'};
constexpr char kScalarMagic[4] = {'F', 'V', 'S', 'M'};
}  // namespace

DepthMap read_depth_raster(const std::filesystem::path& path, float* scale) {
  FilePtr f = open_file(path, "rb");
  char magic[4];
  read_raw(f.get(), magic, 4, path);
  if (std::memcmp(magic, kDepthMagic, 4) != 0) {
    throw IoError("bad-magic: not a depth raster: " + path.string());
  }
  uint32_t w, h;
  float s;
  read_raw(f.get(), &w, 1, path);
  read_raw(f.get(), &h, 1, path);
  read_raw(f.get(), &s, 1, path);
  if (scale) *scale = s;
  DepthMap depth{int(w), int(h)};
  std::vector<float> buf(size_t(w) * h);
  read_raw(f.get(), buf.data(), buf.size(), path);
  for (size_t i = 0; i < buf.size(); ++i) {
    if (std::isfinite(buf[i]) && buf[i] > 0.0f) {
      depth.depth[i] = buf[i];
      depth.valid[i] = 1;
    }
  }
  return depth;
}

void write_depth_raster(const DepthMap& depth, const std::filesystem::path& path, float scale) {
  FilePtr f = open_file(path, "wb");
  write_raw(f.get(), kDepthMagic, 4, path);
  const uint32_t w = uint32_t(depth.width), h = uint32_t(depth.height);
  write_raw(f.get(), &w, 1, path);
  write_raw(f.get(), &h, 1, path);
  write_raw(f.get(), &scale, 1, path);
  std::vector<float> buf(size_t(w) * h, std::numeric_limits<float>::quiet_NaN());
  for (size_t i = 0; i < buf.size(); ++i) {
    if (depth.valid[i]) buf[i] = float(depth.depth[i]);
  }
  write_raw(f.get(), buf.data(), buf.size(), path);
}

Grid<double> read_kitti_disparity_png(const std::filesystem::path& path) {
  const Png16 img = read_png16(path, 1);
  Grid<double> disp(img.width, img.height, 0.0);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) disp.at(x, y) = double(img.at(x, y, 0)) / 256.0;
  return disp;
}

void write_kitti_disparity_png(const Grid<double>& disparity,
                               const std::filesystem::path& path) {
  Png16 img;
  img.width = disparity.width();
  img.height = disparity.height();
  img.channels = 1;
  img.data.resize(size_t(img.width) * img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double e = std::llround(disparity.at(x, y) * 256.0);
      img.data[size_t(y) * img.width + x] = uint16_t(std::clamp(e, 0.0, 65535.0));
    }
  }
  write_png16(img, path);
}

Grid<double> read_scalar_raster(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  char magic[4];
  read_raw(f.get(), magic, 4, path);
  if (std::memcmp(magic, kScalarMagic, 4) != 0) {
    throw IoError("bad-magic: not a scalar raster: " + path.string());
  }
  uint32_t w, h;
  read_raw(f.get(), &w, 1, path);
  read_raw(f.get(), &h, 1, path);
  Grid<double> grid(int(w), int(h), 0.0);
  std::vector<float> buf(size_t(w) * h);
  read_raw(f.get(), buf.data(), buf.size(), path);
  for (int y = 0; y < int(h); ++y)
    for (int x = 0; x < int(w); ++x) grid.at(x, y) = buf[size_t(y) * w + x];
  return grid;
}

void write_scalar_raster(const Grid<double>& grid, const std::filesystem::path& path) {
  FilePtr f = open_file(path, "wb");
  write_raw(f.get(), kScalarMagic, 4, path);
  const uint32_t w = uint32_t(grid.width()), h = uint32_t(grid.height());
  write_raw(f.get(), &w, 1, path);
  write_raw(f.get(), &h, 1, path);
  std::vector<float> buf(size_t(w) * h);
  for (int y = 0; y < int(h); ++y)
    for (int x = 0; x < int(w); ++x) buf[size_t(y) * w + x] = float(grid.at(x, y));
  write_raw(f.get(), buf.data(), buf.size(), path);
}

}  // namespace flowvo

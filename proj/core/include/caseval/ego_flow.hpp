#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "caseval/png_io.hpp"

namespace caseval {

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  bool valid() const { return fx > 0.0 && fy > 0.0; }
};

// Rigid transform taking frame-1 camera coordinates to frame-2 camera
// coordinates. Datasets with the opposite convention invert before use.
struct PoseSE3 {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  bool is_rigid(double tol = 1e-9) const;
  PoseSE3 inverse() const;
  static PoseSE3 identity() { return {}; }
};

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> z;           // meters
  std::vector<std::uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w),
        height(h),
        z(static_cast<std::size_t>(w) * h, 0.0),
        valid(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
};

struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<double> u;           // pixels, +x
  std::vector<double> v;           // pixels, +y
  std::vector<std::uint8_t> valid;

  FlowField() = default;
  FlowField(int w, int h)
      : width(w),
        height(h),
        u(static_cast<std::size_t>(w) * h, 0.0),
        v(static_cast<std::size_t>(w) * h, 0.0),
        valid(static_cast<std::size_t>(w) * h, 1) {}

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  bool same_size(const FlowField& o) const {
    return width == o.width && height == o.height;
  }
};

// Camera-motion-induced flow: back-project each valid depth pixel, apply the
// pose, reproject, and take the pixel displacement. Points reprojecting to
// depth <= 1e-6 m are marked invalid rather than clamped.
// Throws std::invalid_argument on bad intrinsics or a non-rigid pose.
FlowField compute_ego_flow(const DepthMap& depth, const CameraIntrinsics& k,
                           const PoseSE3& pose);

// Per-pixel observed - ego; invalid wherever either input is invalid.
FlowField suppress_ego_flow(const FlowField& observed, const FlowField& ego);

// 16-bit RGB PNG flow codec: stored = round(component*64) + 32768 in the
// first two channels, validity flag in the third. Components must satisfy
// |u|,|v| < 512 px; round-trip error is at most 1/128 px.
std::vector<std::uint8_t> encode_flow_png(const FlowField& f);
FlowField decode_flow_png(const std::vector<std::uint8_t>& bytes);
void write_flow_png(const std::string& path, const FlowField& f);
FlowField read_flow_png(const std::string& path);

// 16-bit grayscale PNG depth codec: depth = value / 256 meters, 0 = invalid.
// Encodable range is (0, 256) meters.
std::vector<std::uint8_t> encode_depth_png(const DepthMap& d);
DepthMap decode_depth_png(const std::vector<std::uint8_t>& bytes);
void write_depth_png(const std::string& path, const DepthMap& d);
DepthMap read_depth_png(const std::string& path);

// Flow color wheel for human inspection: hue from the flow direction,
// saturation from norm / max_norm (clamped), zero flow white, invalid black.
// max_norm <= 0 picks the maximum valid norm in the field.
Image8 flow_to_color(const FlowField& f, double max_norm = 0.0);

}  // namespace caseval

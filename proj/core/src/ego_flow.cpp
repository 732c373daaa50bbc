#include "caseval/ego_flow.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace caseval {

namespace {
constexpr double kMinReprojectedDepth = 1e-6;
constexpr double kFlowScale = 64.0;
constexpr double kFlowOffset = 32768.0;
constexpr double kFlowLimit = 512.0;
constexpr double kDepthScale = 256.0;
}  // namespace

bool PoseSE3::is_rigid(double tol) const {
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

PoseSE3 PoseSE3::inverse() const {
  PoseSE3 inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(rotation.transpose() * translation);
  return inv;
}

FlowField compute_ego_flow(const DepthMap& depth, const CameraIntrinsics& k,
                           const PoseSE3& pose) {
  if (!k.valid()) {
    throw std::invalid_argument("compute_ego_flow: focal lengths must be positive");
  }
  if (!pose.is_rigid()) {
    throw std::invalid_argument("compute_ego_flow: rotation is not orthonormal");
  }
  FlowField flow(depth.width, depth.height);
  // An exactly-identity pose induces exactly zero flow; skip the round trip
  // through the projection, which would leave ~1e-15 px of rounding noise.
  const bool identity = pose.rotation == Eigen::Matrix3d::Identity() &&
                        pose.translation == Eigen::Vector3d::Zero();
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const std::size_t i = depth.index(x, y);
      if (!depth.valid[i] || depth.z[i] <= 0.0) {
        flow.valid[i] = 0;
        flow.u[i] = 0.0;
        flow.v[i] = 0.0;
        continue;
      }
      if (identity) continue;
      const double z = depth.z[i];
      const Eigen::Vector3d p(z * (x - k.cx) / k.fx, z * (y - k.cy) / k.fy, z);
      const Eigen::Vector3d q = pose.rotation * p + pose.translation;
      if (q.z() <= kMinReprojectedDepth) {
        flow.valid[i] = 0;
        flow.u[i] = 0.0;
        flow.v[i] = 0.0;
        continue;
      }
      flow.u[i] = k.fx * q.x() / q.z() + k.cx - x;
      flow.v[i] = k.fy * q.y() / q.z() + k.cy - y;
    }
  }
  return flow;
}

FlowField suppress_ego_flow(const FlowField& observed, const FlowField& ego) {
  if (!observed.same_size(ego)) {
    throw std::invalid_argument("suppress_ego_flow: flow field dimensions differ");
  }
  FlowField out(observed.width, observed.height);
  for (std::size_t i = 0; i < out.u.size(); ++i) {
    if (observed.valid[i] && ego.valid[i]) {
      out.u[i] = observed.u[i] - ego.u[i];
      out.v[i] = observed.v[i] - ego.v[i];
    } else {
      out.valid[i] = 0;
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_flow_png(const FlowField& f) {
  Image16 img;
  img.width = f.width;
  img.height = f.height;
  img.channels = 3;
  img.pixels.resize(f.u.size() * 3);
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    if (f.valid[i]) {
      if (std::abs(f.u[i]) >= kFlowLimit || std::abs(f.v[i]) >= kFlowLimit) {
        throw std::invalid_argument("encode_flow_png: flow component out of range");
      }
      img.pixels[3 * i] =
          static_cast<std::uint16_t>(std::lround(f.u[i] * kFlowScale) + kFlowOffset);
      img.pixels[3 * i + 1] =
          static_cast<std::uint16_t>(std::lround(f.v[i] * kFlowScale) + kFlowOffset);
      img.pixels[3 * i + 2] = 1;
    } else {
      img.pixels[3 * i] = 0;
      img.pixels[3 * i + 1] = 0;
      img.pixels[3 * i + 2] = 0;
    }
  }
  return encode_png16(img);
}

FlowField decode_flow_png(const std::vector<std::uint8_t>& bytes) {
  const Image16 img = decode_png16(bytes);
  if (img.channels != 3) {
    throw std::runtime_error("decode_flow_png: expected 3-channel PNG");
  }
  FlowField f(img.width, img.height);
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    if (img.pixels[3 * i + 2] != 0) {
      f.u[i] = (img.pixels[3 * i] - kFlowOffset) / kFlowScale;
      f.v[i] = (img.pixels[3 * i + 1] - kFlowOffset) / kFlowScale;
    } else {
      f.valid[i] = 0;
    }
  }
  return f;
}

void write_flow_png(const std::string& path, const FlowField& f) {
  write_file_bytes(path, encode_flow_png(f));
}

FlowField read_flow_png(const std::string& path) {
  return decode_flow_png(read_file_bytes(path));
}

std::vector<std::uint8_t> encode_depth_png(const DepthMap& d) {
  Image16 img;
  img.width = d.width;
  img.height = d.height;
  img.channels = 1;
  img.pixels.resize(d.z.size());
  for (std::size_t i = 0; i < d.z.size(); ++i) {
    if (!d.valid[i]) {
      img.pixels[i] = 0;
      continue;
    }
    const long v = std::lround(d.z[i] * kDepthScale);
    if (v <= 0 || v > 0xffff) {
      throw std::invalid_argument("encode_depth_png: depth out of (0, 256) m range");
    }
    img.pixels[i] = static_cast<std::uint16_t>(v);
  }
  return encode_png16(img);
}

DepthMap decode_depth_png(const std::vector<std::uint8_t>& bytes) {
  const Image16 img = decode_png16(bytes);
  if (img.channels != 1) {
    throw std::runtime_error("decode_depth_png: expected single-channel PNG");
  }
  DepthMap d(img.width, img.height);
  for (std::size_t i = 0; i < d.z.size(); ++i) {
    if (img.pixels[i] != 0) {
      d.z[i] = img.pixels[i] / kDepthScale;
      d.valid[i] = 1;
    }
  }
  return d;
}

void write_depth_png(const std::string& path, const DepthMap& d) {
  write_file_bytes(path, encode_depth_png(d));
}

DepthMap read_depth_png(const std::string& path) {
  return decode_depth_png(read_file_bytes(path));
}

namespace {

// HSV (h in [0,360), s,v in [0,1]) to 8-bit RGB.
void hsv_to_rgb(double h, double s, double v, std::uint8_t* rgb) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1)      { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else             { r = c; b = x; }
  const double m = v - c;
  rgb[0] = static_cast<std::uint8_t>(std::lround((r + m) * 255.0));
  rgb[1] = static_cast<std::uint8_t>(std::lround((g + m) * 255.0));
  rgb[2] = static_cast<std::uint8_t>(std::lround((b + m) * 255.0));
}

}  // namespace

Image8 flow_to_color(const FlowField& f, double max_norm) {
  if (max_norm <= 0.0) {
    for (std::size_t i = 0; i < f.u.size(); ++i) {
      if (!f.valid[i]) continue;
      max_norm = std::max(max_norm, std::hypot(f.u[i], f.v[i]));
    }
    if (max_norm <= 0.0) max_norm = 1.0;
  }
  Image8 img;
  img.width = f.width;
  img.height = f.height;
  img.channels = 3;
  img.pixels.assign(f.u.size() * 3, 0);
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    if (!f.valid[i]) continue;  // invalid stays black
    const double norm = std::hypot(f.u[i], f.v[i]);
    double hue = std::atan2(f.v[i], f.u[i]) * 180.0 / std::numbers::pi;
    if (hue < 0.0) hue += 360.0;
    if (hue >= 360.0) hue = 0.0;
    const double sat = std::min(norm / max_norm, 1.0);
    hsv_to_rgb(hue, sat, 1.0, &img.pixels[3 * i]);
  }
  return img;
}

}  // namespace caseval

#pragma once

// The 3D virtual grid: rank <-> coordinate bijection and per-axis process
// groups. Rank layout is x fastest-varying, then y, then z.

#include <array>
#include <string>
#include <vector>

#include "plexuskit/common.hpp"

namespace plexuskit {

enum class Axis : int { X = 0, Y = 1, Z = 2 };

inline const char* axis_name(Axis a) {
  switch (a) {
    case Axis::X: return "X";
    case Axis::Y: return "Y";
    default: return "Z";
  }
}

struct Coords {
  int x = 0, y = 0, z = 0;
  int along(Axis a) const {
    switch (a) {
      case Axis::X: return x;
      case Axis::Y: return y;
      default: return z;
    }
  }
  std::string str() const {
    return "(" + std::to_string(x) + "," + std::to_string(y) + "," +
           std::to_string(z) + ")";
  }
};

class GridConfig {
public:
  GridConfig(int gx, int gy, int gz) : gx_(gx), gy_(gy), gz_(gz) {
    check(gx >= 1 && gy >= 1 && gz >= 1, "grid: all dimensions must be >= 1");
  }

  int gx() const { return gx_; }
  int gy() const { return gy_; }
  int gz() const { return gz_; }
  int size() const { return gx_ * gy_ * gz_; }

  int extent(Axis a) const {
    switch (a) {
      case Axis::X: return gx_;
      case Axis::Y: return gy_;
      default: return gz_;
    }
  }

  Coords coords_of(int rank) const {
    check(rank >= 0 && rank < size(), "grid: rank out of range");
    return {rank % gx_, (rank / gx_) % gy_, rank / (gx_ * gy_)};
  }

  int rank_of(Coords c) const { return c.x + gx_ * (c.y + gy_ * c.z); }

  // Identifies the group a rank belongs to along `axis`: ranks sharing the
  // other two coordinates. Groups along one axis partition all ranks.
  int group_id(Axis axis, Coords c) const {
    switch (axis) {
      case Axis::X: return c.y + gy_ * c.z;
      case Axis::Y: return c.x + gx_ * c.z;
      default: return c.x + gx_ * c.y;
    }
  }

  int group_count(Axis axis) const { return size() / extent(axis); }

  // Members of a group in ascending coordinate order along the axis; this
  // order fixes the deterministic reduction and concatenation order.
  std::vector<int> group_members(Axis axis, int gid) const {
    std::vector<int> out;
    const int g = extent(axis);
    out.reserve(g);
    for (int i = 0; i < g; ++i) {
      Coords c;
      switch (axis) {
        case Axis::X: c = {i, gid % gy_, gid / gy_}; break;
        case Axis::Y: c = {gid % gx_, i, gid / gx_}; break;
        default: c = {gid % gx_, gid / gx_, i}; break;
      }
      out.push_back(rank_of(c));
    }
    return out;
  }

  std::string str() const {
    return std::to_string(gx_) + "x" + std::to_string(gy_) + "x" +
           std::to_string(gz_);
  }

private:
  int gx_, gy_, gz_;
};

struct GridShape {
  int gx = 1, gy = 1, gz = 1;
  std::string str() const {
    return std::to_string(gx) + "," + std::to_string(gy) + "," +
           std::to_string(gz);
  }
};

// All ordered triples with product g, in lexicographic (gx, gy, gz) order.
inline std::vector<GridShape> enumerate_configs(int g) {
  check(g >= 1, "enumerate_configs: g must be >= 1");
  std::vector<GridShape> out;
  for (int gx = 1; gx <= g; ++gx) {
    if (g % gx) continue;
    const int rest = g / gx;
    for (int gy = 1; gy <= rest; ++gy)
      if (rest % gy == 0) out.push_back({gx, gy, rest / gy});
  }
  return out;
}

}  // namespace plexuskit

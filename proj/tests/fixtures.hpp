#pragma once

#include <printchain/geometry.hpp>
#include <printchain/param_design.hpp>
#include <printchain/toolpath.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace fixture {

using namespace printchain;

/// Axis-aligned box [x0, x0+sx] x [y0, y0+sy] x [z0, z0+sz], outward facets.
inline TriangleMesh box(double sx, double sy, double sz, Point3 o = {0, 0, 0}) {
  std::vector<Point3> v{{o.x, o.y, o.z},           {o.x + sx, o.y, o.z},           {o.x + sx, o.y + sy, o.z},
                        {o.x, o.y + sy, o.z},      {o.x, o.y, o.z + sz},           {o.x + sx, o.y, o.z + sz},
                        {o.x + sx, o.y + sy, o.z + sz}, {o.x, o.y + sy, o.z + sz}};
  std::vector<Triangle> t{{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
                          {1, 2, 6}, {1, 6, 5}, {2, 3, 7}, {2, 7, 6}, {3, 0, 4}, {3, 4, 7}};
  return TriangleMesh(std::move(v), std::move(t));
}

inline TriangleMesh unit_cube() { return box(1, 1, 1); }

/// Closed prism of a regular polygon: radius R, height H, N sides.
inline TriangleMesh cylinder(double R, double H, int N) {
  return loft_rings({circle_contour(R, N, 0.0), circle_contour(R, N, H)});
}

/// Cone with base radius R at z = 0 and apex at z = H, N sides.
inline TriangleMesh cone(double R, double H, int N) {
  std::vector<Point3> v;
  std::vector<Triangle> t;
  for (int k = 0; k < N; ++k) {
    const double a = 2.0 * std::numbers::pi * k / N;
    v.push_back({R * std::cos(a), R * std::sin(a), 0.0});
  }
  const auto apex = static_cast<std::uint32_t>(v.size());
  v.push_back({0, 0, H});
  const auto centre = static_cast<std::uint32_t>(v.size());
  v.push_back({0, 0, 0});
  for (int k = 0; k < N; ++k) {
    const auto a = static_cast<std::uint32_t>(k), b = static_cast<std::uint32_t>((k + 1) % N);
    t.push_back({a, b, apex});
    t.push_back({b, a, centre});
  }
  return TriangleMesh(std::move(v), std::move(t));
}

/// Asymmetric closed mesh (box with a wedge on top) for registration tests.
inline TriangleMesh wedge_block() {
  std::vector<Point3> v{{0, 0, 0},   {60, 0, 0},   {60, 30, 0},  {0, 30, 0},
                        {0, 0, 20},  {60, 0, 45},  {60, 30, 30}, {0, 30, 10}};
  std::vector<Triangle> t{{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
                          {1, 2, 6}, {1, 6, 5}, {2, 3, 7}, {2, 7, 6}, {3, 0, 4}, {3, 4, 7}};
  return TriangleMesh(std::move(v), std::move(t));
}

inline PrintConfig print_config(double speed = 50.0, double w = 10.0, double h = 10.0) {
  PrintConfig c;
  c.print_speed = speed;
  c.travel_speed = 2 * speed;
  c.bead_width = w;
  c.bead_height = h;
  return c;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string &name) {
  const auto dir = std::filesystem::temp_directory_path() / ("printchain_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace fixture

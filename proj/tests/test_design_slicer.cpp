#include "fixtures.hpp"
#include "oracles.hpp"

#include <printchain/param_design.hpp>
#include <printchain/slicer.hpp>

#include <gtest/gtest.h>

#include <numbers>

using namespace printchain;

namespace {

SlicePlan plan(double h, SliceMode mode = SliceMode::planar, int n = 360) {
  SlicePlan p;
  p.layer_height = h;
  p.mode = mode;
  p.samples_per_turn = n;
  return p;
}

} // namespace

TEST(Oscillation, ZeroAmplitudeIsACircle) {
  const auto line = gen_oscillating_circle({100.0, 0.0, 8, 360}, 5.0);
  for (const auto &p : line.points()) {
    EXPECT_NEAR(std::hypot(p.x, p.y), 100.0, 1e-12);
    EXPECT_EQ(p.z, 5.0);
  }
  EXPECT_TRUE(line.closed());
}

TEST(Oscillation, KnownSamples) {
  const OscillationParams p{100.0, 10.0, 8, 32};
  const auto line = gen_oscillating_circle(p, 0.0);
  EXPECT_NEAR(line.points()[0].x, 100.0, 1e-12);
  EXPECT_NEAR(line.points()[0].y, 0.0, 1e-12);
  // theta = pi/16 is sample 1 of 32; r = 110.
  const double r = 100.0 + 10.0 * std::sin(8 * std::numbers::pi / 16);
  EXPECT_DOUBLE_EQ(r, 110.0);
  EXPECT_NEAR(line.points()[1].x, 110.0 * std::cos(std::numbers::pi / 16), 1e-12);
  EXPECT_NEAR(line.points()[1].y, 110.0 * std::sin(std::numbers::pi / 16), 1e-12);
  EXPECT_NEAR(line.points()[1].x, 107.8864, 1e-4);
  EXPECT_NEAR(line.points()[1].y, 21.4599, 1e-4);
}

TEST(Oscillation, Validation) {
  EXPECT_THROW(gen_oscillating_circle({0.0, 0.0, 1, 360}, 0), InvalidArgument);
  EXPECT_THROW(gen_oscillating_circle({10.0, 10.0, 1, 360}, 0), InvalidArgument);
  EXPECT_THROW(gen_oscillating_circle({10.0, 1.0, -1, 360}, 0), InvalidArgument);
}

TEST(Weave, ZeroAmplitudeCopiesBase) {
  const WeaveParams w{circle_contour(80, 120), 0.0, 6, std::numbers::pi};
  const auto layers = gen_woven_layers(w, 4, 10.0);
  for (const auto &l : layers)
    for (std::size_t i = 0; i < l.size(); ++i) {
      EXPECT_NEAR(l.points()[i].x, w.base.points()[i].x, 1e-12);
      EXPECT_NEAR(l.points()[i].y, w.base.points()[i].y, 1e-12);
    }
}

TEST(Weave, HalfTurnShiftNegatesOffsets) {
  const WeaveParams w{circle_contour(80, 120), 5.0, 6, std::numbers::pi};
  const auto layers = gen_woven_layers(w, 2, 10.0);
  for (std::size_t i = 0; i < w.base.size(); ++i) {
    const double r0 = norm(layers[0].points()[i]) - 80.0;
    const double r1 = norm(layers[1].points()[i]) - 80.0;
    EXPECT_NEAR(r0, -r1, 1e-9);
  }
  EXPECT_DOUBLE_EQ(layers[0].z(), 5.0);
  EXPECT_DOUBLE_EQ(layers[1].z(), 15.0);
}

TEST(Weave, FullTurnShiftRepeats) {
  const WeaveParams w{circle_contour(80, 120), 5.0, 3, 2 * std::numbers::pi};
  const auto layers = gen_woven_layers(w, 5, 10.0);
  for (std::size_t k = 1; k < layers.size(); ++k)
    for (std::size_t i = 0; i < w.base.size(); ++i)
      EXPECT_NEAR(distance(layers[k].points()[i], layers[0].points()[i]), 0.0, 1e-9);
}

TEST(Weave, AmplitudeAtInradiusIsRejected) {
  const WeaveParams w{circle_contour(80, 120), 85.0, 3, std::numbers::pi};
  EXPECT_THROW(gen_woven_layers(w, 2, 10.0), GeometryError);
}

TEST(Twist, BlendEndpoints) {
  TwistParams t{80, 60, 30, 100, 90, 360};
  const auto bottom = twisted_section(t, 0.0);
  for (std::size_t k = 0; k < bottom.size(); ++k) {
    const auto p = bottom.points()[k];
    const bool on_x = std::abs(std::abs(p.x) - 40) < 1e-9 && std::abs(p.y) <= 30 + 1e-9;
    const bool on_y = std::abs(std::abs(p.y) - 30) < 1e-9 && std::abs(p.x) <= 40 + 1e-9;
    EXPECT_TRUE(on_x || on_y) << k;
  }
  const auto top = twisted_section(t, 100.0);
  for (std::size_t k = 0; k < top.size(); ++k) {
    const auto p = top.points()[k];
    EXPECT_NEAR(norm(p), 30.0, 1e-9);
    const double expect = 2 * std::numbers::pi * k / 360 + std::numbers::pi / 2;
    EXPECT_NEAR(std::remainder(std::atan2(p.y, p.x) - expect, 2 * std::numbers::pi), 0.0, 1e-9);
  }
  TwistParams sq{80, 80, 30, 100, 0, 360};
  EXPECT_DOUBLE_EQ(sq.radius_at(0.0, 0.5), 35.0);
  EXPECT_NEAR(norm(twisted_section(sq, 50.0).points()[0]), 35.0, 1e-12);
}

TEST(Loft, WatertightWithPrismVolume) {
  const auto layers = gen_twisted_prism({80, 60, 30, 100, 45, 180}, 10.0);
  ASSERT_EQ(layers.size(), 10u);
  const auto mesh = loft_layers(layers, 10.0);
  EXPECT_TRUE(mesh.watertight());
  const auto [lo, hi] = mesh.bounds();
  EXPECT_NEAR(lo.z, 0.0, 1e-12);
  EXPECT_NEAR(hi.z, 100.0, 1e-12);
  const auto cyl = fixture::cylinder(50, 20, 360);
  EXPECT_TRUE(cyl.watertight());
  EXPECT_NEAR(cyl.volume(), circle_contour(50, 360).area() * 20, 1e-6);
}

TEST(Planar, CylinderLayers) {
  const auto stack = slice_planar(fixture::cylinder(50, 20, 360), plan(2.0));
  ASSERT_EQ(stack.size(), 10u);
  for (std::size_t k = 0; k < stack.size(); ++k) {
    EXPECT_NEAR(stack[k].z, 1.0 + 2.0 * k, 1e-12);
    ASSERT_EQ(stack[k].contours.size(), 1u);
    const auto &c = stack[k].contours[0];
    EXPECT_EQ(c.orientation(), Orientation::outer);
    for (const auto &p : c.points()) {
      const double r = norm(p);
      EXPECT_LE(r, 50.0 + 1e-9);
      EXPECT_GE(r, 50.0 * std::cos(std::numbers::pi / 360) - 1e-9);
    }
    EXPECT_NEAR(c.area(), circle_contour(50, 360).area(), 1e-6);
  }
}

TEST(Planar, CubeLayers) {
  const auto stack = slice_planar(fixture::box(40, 40, 40), plan(10.0));
  ASSERT_EQ(stack.size(), 4u);
  for (const auto &l : stack.layers()) {
    ASSERT_EQ(l.contours.size(), 1u);
    EXPECT_NEAR(l.contours[0].area(), 1600.0, 1e-9);
    EXPECT_NEAR(l.contours[0].perimeter(), 160.0, 1e-9);
  }
}

TEST(Planar, ConeTaper) {
  const auto stack = slice_planar(fixture::cone(30, 30, 720), plan(10.0));
  ASSERT_EQ(stack.size(), 3u);
  EXPECT_NEAR(stack[1].z, 15.0, 1e-12);
  const auto &c = stack[1].contours[0];
  double rmax = 0.0;
  for (const auto &p : c.points())
    rmax = std::max(rmax, norm(p));
  EXPECT_NEAR(rmax, 15.0, 0.01);
}

TEST(Planar, HoleIsReportedWithOrientation) {
  // Tube: outer box minus inner box, built as two nested closed shells with
  // the inner one inverted.
  const auto outer = fixture::box(40, 40, 20);
  const auto inner = fixture::box(20, 20, 20, {10, 10, 0});
  auto v = outer.vertices();
  auto t = outer.triangles();
  const auto off = static_cast<std::uint32_t>(v.size());
  for (const auto &p : inner.vertices())
    v.push_back(p);
  for (const auto &tri : inner.triangles())
    t.push_back({tri[0] + off, tri[2] + off, tri[1] + off});
  const auto stack = slice_planar(TriangleMesh(v, t), plan(10.0));
  ASSERT_EQ(stack.size(), 2u);
  ASSERT_EQ(stack[0].contours.size(), 2u);
  EXPECT_EQ(stack[0].contours[0].orientation(), Orientation::outer);
  EXPECT_EQ(stack[0].contours[1].orientation(), Orientation::hole);
  EXPECT_NEAR(stack[0].contours[0].area() - stack[0].contours[1].area(), 1200.0, 1e-9);
}

TEST(Planar, OpenMeshIsRefused) {
  const auto cube = fixture::unit_cube();
  auto tris = cube.triangles();
  tris.pop_back();
  EXPECT_THROW(slice_planar(TriangleMesh(cube.vertices(), tris), plan(0.25)), GeometryError);
}

TEST(Planar, ThreadCountDoesNotChangeResult) {
  const auto mesh = loft_layers(gen_twisted_prism({80, 60, 30, 100, 45, 180}, 5.0), 5.0);
  const auto a = slice_planar(mesh, plan(3.0), 1);
  const auto b = slice_planar(mesh, plan(3.0), 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    ASSERT_EQ(a[k].contours.size(), b[k].contours.size());
    for (std::size_t c = 0; c < a[k].contours.size(); ++c)
      EXPECT_EQ(a[k].contours[c].points(), b[k].contours[c].points());
  }
}

TEST(Parametric, ConstantOscillationGivesIdenticalContours) {
  const OscillationParams p{100, 5, 6, 360};
  const auto stack =
      slice_parametric([&](std::size_t, double z) { return std::vector<Contour2>{oscillating_contour(p, z)}; }, 20.0,
                       plan(2.0));
  ASSERT_EQ(stack.size(), 10u);
  for (const auto &l : stack.layers())
    EXPECT_EQ(l.contours[0].points(), stack[0].contours[0].points());
}

TEST(Parametric, MatchesTwistGenerator) {
  const TwistParams t{80, 60, 30, 100, 45, 180};
  const auto stack = slice_parametric(
      [&](std::size_t, double z) { return std::vector<Contour2>{twisted_section(t, z)}; }, t.height, plan(10.0));
  const auto direct = gen_twisted_prism(t, 10.0);
  ASSERT_EQ(stack.size(), direct.size());
  for (std::size_t k = 0; k < direct.size(); ++k)
    EXPECT_EQ(stack[k].contours[0].points(), direct[k].points());
}

TEST(Parametric, ErrorsNameTheLayer) {
  try {
    slice_parametric(
        [](std::size_t k, double z) {
          if (k == 3)
            return std::vector<Contour2>{Contour2(z, {{0, 0}, {4, 4}, {4, 0}, {0, 2}})};
          return std::vector<Contour2>{circle_contour(10, 36, z)};
        },
        10.0, plan(1.0));
    FAIL();
  } catch (const GeometryError &e) {
    EXPECT_EQ(std::string(e.what()).rfind("layer 3:", 0), 0u) << e.what();
  }
}

TEST(Helical, CylinderConstruction) {
  const auto stack = slice_planar(fixture::cylinder(50, 20, 360), plan(2.0));
  const auto helix = slice_helical(stack, plan(2.0, SliceMode::helical));
  EXPECT_FALSE(helix.closed());
  EXPECT_EQ(helix.size(), 10u * 360 + 1);
  const auto &pts = helix.points();
  EXPECT_NEAR(pts.front().z, 2.0, 1e-12);
  EXPECT_NEAR(pts.back().z, 20.0, 1e-12);
  for (int j = 0; j < 360; ++j)
    EXPECT_EQ(pts[j].z, 2.0);
  double max_step = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    EXPECT_GE(pts[i].z, pts[i - 1].z);
    max_step = std::max(max_step, pts[i].z - pts[i - 1].z);
  }
  EXPECT_NEAR(max_step, 2.0 / 360, 1e-9);
  EXPECT_NEAR(polyline_length(helix), oracle::helix_length(50, 2, 10), 0.005 * oracle::helix_length(50, 2, 10));
  // Starts on the +x axis of the centroid.
  EXPECT_NEAR(pts.front().y, 0.0, 1e-9);
  EXPECT_GT(pts.front().x, 0.0);
}

TEST(Helical, BlendsBetweenLayerShapes) {
  std::vector<Layer> layers;
  for (int k = 0; k < 3; ++k)
    layers.push_back({5.0 + 10.0 * k, {circle_contour(40.0 + 10.0 * k, 72, 5.0 + 10.0 * k)}});
  const LayerStack stack(10.0, layers);
  auto p = plan(10.0, SliceMode::helical, 72);
  const auto helix = slice_helical(stack, p);
  // Turn 1 blends radius 40 -> 50: halfway through, radius 45 (within chord error).
  const auto mid = helix.points()[72 + 36];
  EXPECT_NEAR(std::hypot(mid.x, mid.y), 45.0, 0.1);
  EXPECT_NEAR(mid.z, 15.0, 1e-12);
  p.flat_first_layer = false;
  const auto ramp = slice_helical(stack, p);
  EXPECT_NEAR(ramp.points().front().z, 0.0, 1e-12);
  EXPECT_NEAR(ramp.points()[36].z, 5.0, 1e-12);
}

TEST(Helical, RejectsMultipleContours) {
  std::vector<Layer> layers{{5.0, {circle_contour(40, 72, 5.0), circle_contour(10, 72, 5.0).reversed()}}};
  EXPECT_THROW(slice_helical(LayerStack(10.0, layers), plan(10.0, SliceMode::helical)), GeometryError);
}

TEST(LayerStackInvariant, SpacingIsChecked) {
  EXPECT_THROW(LayerStack(1.0, {{0.5, {}}, {1.7, {}}}), InvalidArgument);
  EXPECT_THROW(LayerStack(1.0, {{1.5, {}}, {0.5, {}}}), InvalidArgument);
}

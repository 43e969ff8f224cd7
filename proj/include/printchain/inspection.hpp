#pragma once

// Scan-to-CAD inspection: point cloud I/O, rigid ICP alignment, signed
// deviation statistics and heatmap export.

#include <printchain/error.hpp>
#include <printchain/geometry.hpp>
#include <printchain/mesh_distance.hpp>
#include <printchain/parallel.hpp>
#include <printchain/stl.hpp>

#include <Eigen/Dense>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace printchain {

struct PointCloud {
  std::vector<Point3> points;
  std::vector<double> scalars; // empty, or one value per point

  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> pts, std::vector<double> values = {})
      : points(std::move(pts)), scalars(std::move(values)) {
    if (points.empty())
      throw InvalidArgument("point cloud needs at least one point");
    for (const auto &p : points)
      if (!is_finite(p))
        throw InvalidArgument("point cloud has a non-finite coordinate");
    if (!scalars.empty() && scalars.size() != points.size())
      throw InvalidArgument("point cloud scalar count differs from point count");
  }

  std::size_t size() const { return points.size(); }
};

// ---------------------------------------------------------------------------
// Rigid transforms

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  static RigidTransform about_z(double angle_deg, const Point3 &shift) {
    RigidTransform t;
    t.rotation = Eigen::AngleAxisd(deg_to_rad(angle_deg), Eigen::Vector3d::UnitZ()).toRotationMatrix();
    t.translation = {shift.x, shift.y, shift.z};
    return t;
  }

  Point3 apply(const Point3 &p) const {
    const Eigen::Vector3d v = rotation * Eigen::Vector3d(p.x, p.y, p.z) + translation;
    return {v.x(), v.y(), v.z()};
  }

  /// this after other.
  RigidTransform compose(const RigidTransform &other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  RigidTransform inverse() const {
    const Eigen::Matrix3d rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  /// Rotation angle in degrees.
  double angle_deg() const {
    return rad_to_deg(std::acos(std::clamp((rotation.trace() - 1.0) / 2.0, -1.0, 1.0)));
  }

  bool is_valid(double tol = 1e-9) const {
    return std::abs(rotation.determinant() - 1.0) <= tol &&
           (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol;
  }
};

inline PointCloud transform_cloud(const PointCloud &cloud, const RigidTransform &t) {
  std::vector<Point3> pts;
  pts.reserve(cloud.size());
  for (const auto &p : cloud.points)
    pts.push_back(t.apply(p));
  return PointCloud(std::move(pts), cloud.scalars);
}

inline TriangleMesh transform_mesh(const TriangleMesh &mesh, const RigidTransform &t) {
  std::vector<Point3> v;
  v.reserve(mesh.vertices().size());
  for (const auto &p : mesh.vertices())
    v.push_back(t.apply(p));
  return TriangleMesh(std::move(v), mesh.triangles());
}

// ---------------------------------------------------------------------------
// Point cloud I/O

namespace detail {

inline double parse_double(const std::string &tok, std::size_t line_no, const char *what) {
  char *end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end != tok.c_str() + tok.size() || !std::isfinite(v))
    throw ParseError(fmt::format("line {}: {} '{}' is not a floating-point number", line_no, what, tok));
  return v;
}

inline std::vector<std::string> split_ws(const std::string &line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok)
    out.push_back(tok);
  return out;
}

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos)
      nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    lines.push_back(std::move(line));
    pos = nl + 1;
  }
  return lines;
}

inline PointCloud parse_ply(std::string_view text) {
  const auto lines = split_lines(text);
  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::pair<std::string, std::string>> props; // (type, name)
  };
  std::vector<Element> elements;
  std::size_t i = 1;
  bool ascii = false, ended = false;
  for (; i < lines.size(); ++i) {
    const auto tok = split_ws(lines[i]);
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info")
      continue;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii")
        throw ParseError("PLY: only ASCII format is supported");
      ascii = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3)
        throw ParseError(fmt::format("PLY header line {}: malformed element declaration", i + 1));
      Element e;
      e.name = tok[1];
      try {
        e.count = std::stoul(tok[2]);
      } catch (...) {
        throw ParseError(fmt::format("PLY header line {}: bad element count '{}'", i + 1, tok[2]));
      }
      elements.push_back(std::move(e));
    } else if (tok[0] == "property") {
      if (elements.empty() || tok.size() < 3)
        throw ParseError(fmt::format("PLY header line {}: property outside an element", i + 1));
      if (tok[1] == "list")
        elements.back().props.emplace_back("list", tok.back());
      else
        elements.back().props.emplace_back(tok[1], tok[2]);
    } else if (tok[0] == "end_header") {
      ended = true;
      ++i;
      break;
    } else {
      throw ParseError(fmt::format("PLY header line {}: unexpected '{}'", i + 1, tok[0]));
    }
  }
  if (!ascii || !ended)
    throw ParseError("PLY: malformed header (missing format or end_header)");
  std::vector<Point3> pts;
  std::vector<double> quality;
  bool have_vertex = false;
  for (const auto &e : elements) {
    if (e.name != "vertex") {
      std::size_t skipped = 0;
      while (skipped < e.count && i < lines.size()) {
        if (!split_ws(lines[i]).empty())
          ++skipped;
        ++i;
      }
      continue;
    }
    have_vertex = true;
    int ix = -1, iy = -1, iz = -1, iq = -1;
    for (std::size_t p = 0; p < e.props.size(); ++p) {
      const auto &[type, name] = e.props[p];
      const bool is_float = type == "float" || type == "double" || type == "float32" || type == "float64";
      if (name == "x" || name == "y" || name == "z") {
        if (!is_float)
          throw ParseError("PLY: vertex property '" + name + "' must be float or double, found " + type);
        (name == "x" ? ix : name == "y" ? iy : iz) = static_cast<int>(p);
      } else if (name == "quality") {
        iq = static_cast<int>(p);
      }
    }
    if (ix < 0 || iy < 0 || iz < 0)
      throw ParseError("PLY: vertex element must declare float x, y and z");
    std::size_t found = 0;
    while (found < e.count && i < lines.size()) {
      const auto tok = split_ws(lines[i]);
      ++i;
      if (tok.empty())
        continue;
      if (tok.size() < e.props.size())
        throw ParseError(fmt::format("PLY line {}: expected {} vertex values, found {}", i, e.props.size(), tok.size()));
      pts.push_back({parse_double(tok[ix], i, "x"), parse_double(tok[iy], i, "y"), parse_double(tok[iz], i, "z")});
      if (iq >= 0)
        quality.push_back(parse_double(tok[iq], i, "quality"));
      ++found;
    }
    if (found != e.count)
      throw ParseError(fmt::format("PLY vertex count mismatch: header declares {} vertices, found {}", e.count, found));
  }
  if (!have_vertex)
    throw ParseError("PLY: no vertex element");
  std::size_t extra = 0;
  for (; i < lines.size(); ++i)
    if (!split_ws(lines[i]).empty())
      ++extra;
  if (extra > 0 && elements.back().name == "vertex")
    throw ParseError(fmt::format("PLY vertex count mismatch: header declares {} vertices, found {}",
                                 elements.back().count, elements.back().count + extra));
  return PointCloud(std::move(pts), std::move(quality));
}

inline PointCloud parse_xyz(std::string_view text) {
  const auto lines = split_lines(text);
  std::vector<Point3> pts;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto tok = split_ws(lines[i]);
    if (tok.empty() || tok[0][0] == '#')
      continue;
    if (tok.size() < 3)
      throw ParseError(fmt::format("XYZ line {}: expected 3 coordinates, found {}", i + 1, tok.size()));
    pts.push_back({parse_double(tok[0], i + 1, "x"), parse_double(tok[1], i + 1, "y"), parse_double(tok[2], i + 1, "z")});
  }
  if (pts.empty())
    throw ParseError("XYZ file contains no points");
  return PointCloud(std::move(pts));
}

} // namespace detail

/// ASCII PLY (detected by its magic line) or whitespace-separated XYZ text.
inline PointCloud parse_pointcloud(std::string_view text) {
  std::size_t s = 0;
  while (s < text.size() && std::isspace(static_cast<unsigned char>(text[s])))
    ++s;
  if (text.substr(s, 3) == "ply")
    return detail::parse_ply(text.substr(s));
  return detail::parse_xyz(text);
}

inline PointCloud load_pointcloud(const std::filesystem::path &path) {
  return parse_pointcloud(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// ICP

struct IcpOptions {
  int max_iterations = 50;
  double tolerance = 1e-6; // mm of RMS improvement
};

struct IcpResult {
  RigidTransform transform; // maps cloud coordinates onto the reference mesh
  std::vector<double> rms;  // RMS closest-point distance before each update and at the end
  int iterations = 0;
};

namespace detail {

inline void require_non_collinear(const std::vector<Point3> &pts) {
  if (pts.size() < 3)
    throw GeometryError("ICP needs at least 3 points (rank-deficient cloud)");
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto &p : pts)
    mean += Eigen::Vector3d(p.x, p.y, p.z);
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto &p : pts) {
    const Eigen::Vector3d d = Eigen::Vector3d(p.x, p.y, p.z) - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const auto ev = eig.eigenvalues(); // ascending
  if (!(ev(1) > 1e-12 * std::max(ev(2), 1e-300)))
    throw GeometryError("ICP cloud is collinear (rank-deficient cross-covariance)");
}

/// Least-squares rotation and translation taking src onto dst.
inline RigidTransform best_fit(const std::vector<Point3> &src, const std::vector<Point3> &dst) {
  Eigen::Vector3d ms = Eigen::Vector3d::Zero(), md = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    ms += Eigen::Vector3d(src[i].x, src[i].y, src[i].z);
    md += Eigen::Vector3d(dst[i].x, dst[i].y, dst[i].z);
  }
  ms /= static_cast<double>(src.size());
  md /= static_cast<double>(src.size());
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i)
    h += (Eigen::Vector3d(src[i].x, src[i].y, src[i].z) - ms) * (Eigen::Vector3d(dst[i].x, dst[i].y, dst[i].z) - md).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d u = svd.matrixU(), v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = v * d * u.transpose();
  t.translation = md - t.rotation * ms;
  return t;
}

} // namespace detail

/// Point-to-point ICP against the nearest surface points of the reference.
/// Stops when the RMS improvement drops below the tolerance or after
/// max_iterations updates.
inline IcpResult align_icp(const PointCloud &cloud, const MeshDistance &reference, const IcpOptions &opt = {},
                           unsigned threads = 1) {
  detail::require_non_collinear(cloud.points);
  if (opt.max_iterations < 0 || !(opt.tolerance >= 0.0))
    throw InvalidArgument("ICP options must be non-negative");
  IcpResult res;
  std::vector<Point3> moved = cloud.points;
  std::vector<Point3> target(moved.size());
  const auto correspond = [&] {
    parallel_for(moved.size(), threads, [&](std::size_t i) { target[i] = reference.query(moved[i]).closest; });
    double sum = 0.0;
    for (std::size_t i = 0; i < moved.size(); ++i) {
      const Point3 d = moved[i] - target[i];
      sum += dot(d, d);
    }
    return std::sqrt(sum / static_cast<double>(moved.size()));
  };
  double rms = correspond();
  res.rms.push_back(rms);
  for (int it = 0; it < opt.max_iterations; ++it) {
    const auto step = detail::best_fit(moved, target);
    res.transform = step.compose(res.transform);
    for (std::size_t i = 0; i < moved.size(); ++i)
      moved[i] = res.transform.apply(cloud.points[i]);
    const double next = correspond();
    res.rms.push_back(next);
    res.iterations = it + 1;
    const bool converged = rms - next < opt.tolerance;
    rms = next;
    if (converged)
      break;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Deviation report

struct InspectOptions {
  double tolerance = 1.0;     // mm
  bool align = false;
  double pass_fraction = 0.95;
  IcpOptions icp;
};

struct DeviationReport {
  double mean_abs = 0.0;
  double rms = 0.0;
  double max_abs = 0.0;
  double p95_abs = 0.0;
  double signed_mean = 0.0;
  double fraction_within = 0.0;
  double tolerance = 0.0;
  double pass_fraction = 0.0;
  bool passed = false;
  bool signed_distances = true; // false when the reference is open (unsigned values)
  std::optional<IcpResult> alignment;
  PointCloud cloud; // points in the reference frame, scalars = signed deviations
};

/// Per-point signed distances from scan to reference and their statistics.
/// Sums run over sorted values, so results do not depend on point order or
/// on how the distance queries were split across threads.
inline DeviationReport deviation_report(const PointCloud &scan, const MeshDistance &reference,
                                        const InspectOptions &opt, unsigned threads = 1) {
  if (!(opt.tolerance > 0.0))
    throw InvalidArgument("inspection tolerance must be positive");
  if (!(opt.pass_fraction >= 0.0 && opt.pass_fraction <= 1.0))
    throw InvalidArgument("pass fraction must be in [0, 1]");
  DeviationReport rep;
  rep.tolerance = opt.tolerance;
  rep.pass_fraction = opt.pass_fraction;
  rep.signed_distances = reference.signed_distances();
  PointCloud cloud = scan;
  if (opt.align) {
    rep.alignment = align_icp(scan, reference, opt.icp, threads);
    cloud = transform_cloud(scan, rep.alignment->transform);
  }
  std::vector<double> dev(cloud.size());
  parallel_for(cloud.size(), threads, [&](std::size_t i) { dev[i] = reference.signed_distance(cloud.points[i]); });

  std::vector<double> abs_sorted(dev.size()), signed_sorted = dev;
  std::transform(dev.begin(), dev.end(), abs_sorted.begin(), [](double d) { return std::abs(d); });
  std::sort(abs_sorted.begin(), abs_sorted.end());
  std::sort(signed_sorted.begin(), signed_sorted.end());
  const auto n = static_cast<double>(dev.size());
  double sum_abs = 0.0, sum_sq = 0.0, sum_signed = 0.0;
  std::size_t within = 0;
  for (double a : abs_sorted) {
    sum_abs += a;
    sum_sq += a * a;
    if (a <= opt.tolerance)
      ++within;
  }
  for (double s : signed_sorted)
    sum_signed += s;
  rep.mean_abs = sum_abs / n;
  rep.rms = std::sqrt(sum_sq / n);
  rep.max_abs = abs_sorted.back();
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * n));
  rep.p95_abs = abs_sorted[std::max<std::size_t>(rank, 1) - 1];
  rep.signed_mean = sum_signed / n;
  rep.fraction_within = static_cast<double>(within) / n;
  rep.passed = rep.fraction_within >= opt.pass_fraction;
  cloud.scalars = std::move(dev);
  rep.cloud = std::move(cloud);
  return rep;
}

inline std::string deviation_report_text(const DeviationReport &r) {
  std::string out = "# printchain deviation report\n";
  out += fmt::format("points: {}\n", r.cloud.size());
  out += fmt::format("tolerance_mm: {:.6g}\n", r.tolerance);
  out += fmt::format("mean_abs_mm: {:.6g}\n", r.mean_abs);
  out += fmt::format("rms_mm: {:.6g}\n", r.rms);
  out += fmt::format("max_abs_mm: {:.6g}\n", r.max_abs);
  out += fmt::format("p95_abs_mm: {:.6g}\n", r.p95_abs);
  out += fmt::format("signed_mean_mm: {:.6g}\n", r.signed_mean);
  out += fmt::format("fraction_within: {:.6g}\n", r.fraction_within);
  out += fmt::format("pass_fraction: {:.6g}\n", r.pass_fraction);
  out += fmt::format("verdict: {}\n", r.passed ? "pass" : "fail");
  if (!r.signed_distances)
    out += "warning: reference mesh is not watertight; deviations are unsigned\n";
  if (r.alignment) {
    const auto &t = r.alignment->transform;
    out += fmt::format("icp_iterations: {}\n", r.alignment->iterations);
    out += fmt::format("icp_final_rms_mm: {:.6g}\n", r.alignment->rms.back());
    out += fmt::format("icp_rotation_deg: {:.6g}\n", t.angle_deg());
    out += fmt::format("icp_translation_mm: {:.6g} {:.6g} {:.6g}\n", t.translation.x(), t.translation.y(),
                       t.translation.z());
  }
  return out;
}

inline std::string deviations_csv(const PointCloud &cloud) {
  std::string out = "x,y,z,deviation\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto &p = cloud.points[i];
    out += fmt::format("{},{},{},{}\n", p.x, p.y, p.z, cloud.scalars.at(i));
  }
  return out;
}

/// Diverging colour: white at zero, saturated red at +tolerance and blue at
/// -tolerance, clamped beyond.
inline std::array<std::uint8_t, 3> deviation_color(double deviation, double tolerance) {
  const double s = std::clamp(deviation / tolerance, -1.0, 1.0);
  const auto fade = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - std::abs(s))));
  if (s >= 0.0)
    return {255, fade, fade};
  return {fade, fade, 255};
}

inline std::string heatmap_ply_text(const PointCloud &cloud, double tolerance) {
  if (cloud.scalars.size() != cloud.size())
    throw InvalidArgument("heatmap export needs one deviation per point");
  if (!(tolerance > 0.0))
    throw InvalidArgument("heatmap tolerance must be positive");
  std::string out = "ply\nformat ascii 1.0\n";
  out += fmt::format("comment printchain deviation heatmap, quality = signed deviation mm, colour clamped at +/-{} mm\n",
                     tolerance);
  out += fmt::format("element vertex {}\n", cloud.size());
  out += "property float x\nproperty float y\nproperty float z\nproperty float quality\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto &p = cloud.points[i];
    const auto c = deviation_color(cloud.scalars[i], tolerance);
    out += fmt::format("{} {} {} {} {} {} {}\n", p.x, p.y, p.z, cloud.scalars[i], c[0], c[1], c[2]);
  }
  return out;
}

inline void export_heatmap_ply(const PointCloud &cloud, double tolerance, const std::filesystem::path &path) {
  detail::write_file(path, heatmap_ply_text(cloud, tolerance));
}

} // namespace printchain

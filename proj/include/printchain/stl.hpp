#pragma once

// STL reading (binary and ASCII) and deterministic binary writing.

#include <printchain/error.hpp>
#include <printchain/geometry.hpp>

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace printchain {

inline constexpr double kStlMergeTolerance = 1e-6; // mm

namespace detail {

static_assert(std::endian::native == std::endian::little, "STL I/O assumes a little-endian host");

/// Merges vertices closer than a tolerance using a uniform hash grid.
class VertexWelder {
public:
  explicit VertexWelder(double tol) : tol_(tol) {}

  std::uint32_t insert(const Point3 &p) {
    const Key k = key_of(p);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find(Key{k.x + dx, k.y + dy, k.z + dz});
          if (it == cells_.end())
            continue;
          for (auto idx : it->second)
            if (distance(vertices_[idx], p) <= tol_)
              return idx;
        }
    const auto idx = static_cast<std::uint32_t>(vertices_.size());
    vertices_.push_back(p);
    cells_[k].push_back(idx);
    return idx;
  }

  std::vector<Point3> take() { return std::move(vertices_); }

private:
  struct Key {
    std::int64_t x, y, z;
    bool operator==(const Key &) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key &k) const {
      std::uint64_t h = 1469598103934665603ULL;
      for (auto v : {k.x, k.y, k.z}) {
        h ^= static_cast<std::uint64_t>(v);
        h *= 1099511628211ULL;
      }
      return static_cast<std::size_t>(h);
    }
  };

  Key key_of(const Point3 &p) const {
    return {static_cast<std::int64_t>(std::floor(p.x / tol_)), static_cast<std::int64_t>(std::floor(p.y / tol_)),
            static_cast<std::int64_t>(std::floor(p.z / tol_))};
  }

  double tol_;
  std::vector<Point3> vertices_;
  std::unordered_map<Key, std::vector<std::uint32_t>, KeyHash> cells_;
};

inline TriangleMesh build_mesh(const std::vector<std::array<Point3, 3>> &facets) {
  if (facets.empty())
    throw ParseError("STL contains zero triangles (empty mesh)");
  VertexWelder welder(kStlMergeTolerance);
  std::vector<Triangle> tris;
  tris.reserve(facets.size());
  for (const auto &f : facets) {
    Triangle t{welder.insert(f[0]), welder.insert(f[1]), welder.insert(f[2])};
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      continue;
    if (0.5 * norm(cross(f[1] - f[0], f[2] - f[0])) <= kMinTriangleArea)
      continue;
    tris.push_back(t);
  }
  if (tris.empty())
    throw ParseError("STL contains only degenerate triangles (empty mesh)");
  auto verts = welder.take();
  return TriangleMesh(std::move(verts), std::move(tris));
}

template <typename T> T read_le(const char *p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

inline std::vector<std::array<Point3, 3>> parse_binary_stl(std::string_view data) {
  const auto count = read_le<std::uint32_t>(data.data() + 80);
  std::vector<std::array<Point3, 3>> facets;
  facets.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const char *rec = data.data() + 84 + 50 * static_cast<std::size_t>(i);
    std::array<Point3, 3> f;
    for (int v = 0; v < 3; ++v) {
      const char *c = rec + 12 + 12 * v;
      f[v] = {read_le<float>(c), read_le<float>(c + 4), read_le<float>(c + 8)};
      if (!is_finite(f[v]))
        throw ParseError("non-finite vertex in facet at byte offset " + std::to_string(rec - data.data()));
    }
    facets.push_back(f);
  }
  return facets;
}

class AsciiStlReader {
public:
  explicit AsciiStlReader(std::string_view text) : text_(text) {}

  std::vector<std::array<Point3, 3>> parse() {
    expect("solid");
    skip_line();
    std::vector<std::array<Point3, 3>> facets;
    while (true) {
      const auto tok = next();
      if (tok == "endsolid")
        break;
      if (tok != "facet")
        fail("expected 'facet' or 'endsolid', found '" + std::string(tok) + "'");
      expect("normal");
      number();
      number();
      number();
      expect("outer");
      expect("loop");
      std::array<Point3, 3> f;
      for (auto &v : f) {
        expect("vertex");
        v.x = number();
        v.y = number();
        v.z = number();
      }
      expect("endloop");
      expect("endfacet");
      facets.push_back(f);
    }
    return facets;
  }

private:
  [[noreturn]] void fail(const std::string &what) const {
    throw ParseError("ASCII STL: " + what + " at byte offset " + std::to_string(tok_start_));
  }

  std::string_view next() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
    tok_start_ = pos_;
    if (pos_ >= text_.size())
      fail("unexpected end of file");
    const auto begin = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
    return text_.substr(begin, pos_ - begin);
  }

  void expect(std::string_view word) {
    const auto tok = next();
    if (tok != word)
      fail("expected '" + std::string(word) + "', found '" + std::string(tok) + "'");
  }

  double number() {
    const std::string tok(next());
    char *end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size() || !std::isfinite(v))
      fail("malformed number '" + tok + "'");
    return v;
  }

  void skip_line() {
    while (pos_ < text_.size() && text_[pos_] != '\n')
      ++pos_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t tok_start_ = 0;
};

inline bool looks_ascii(std::string_view data) {
  std::size_t i = 0;
  while (i < data.size() && std::isspace(static_cast<unsigned char>(data[i])))
    ++i;
  return data.substr(i, 5) == "solid";
}

inline std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open '" + path.string() + "' for reading");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad())
    throw IoError("read failure on '" + path.string() + "'");
  return data;
}

inline void write_file(const std::filesystem::path &path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out)
    throw IoError("write failure on '" + path.string() + "'");
}

} // namespace detail

/// Parses STL content held in memory. A buffer whose size matches the binary
/// layout exactly is read as binary even if it starts with "solid".
inline TriangleMesh parse_stl(std::string_view data) {
  if (data.size() >= 84) {
    const auto count = detail::read_le<std::uint32_t>(data.data() + 80);
    if (data.size() == 84 + 50 * static_cast<std::uint64_t>(count))
      return detail::build_mesh(detail::parse_binary_stl(data));
  }
  if (detail::looks_ascii(data))
    return detail::build_mesh(detail::AsciiStlReader(data).parse());
  if (data.size() < 84)
    throw ParseError("malformed STL header: file ends at byte offset " + std::to_string(data.size()) +
                     ", binary STL needs 84 header bytes");
  const auto count = detail::read_le<std::uint32_t>(data.data() + 80);
  const std::uint64_t complete = (data.size() - 84) / 50;
  throw ParseError("truncated STL facet block at byte offset " + std::to_string(84 + 50 * complete) + ": header declares " +
                   std::to_string(count) + " facets, file holds " + std::to_string(complete));
}

inline TriangleMesh load_stl(const std::filesystem::path &path) { return parse_stl(detail::read_file(path)); }

/// Binary STL image: 80 zero bytes, little-endian facet count, 50-byte records
/// with float32 normal and vertices and a zero attribute word.
inline std::string stl_bytes(const TriangleMesh &mesh) {
  if (mesh.empty())
    throw InvalidArgument("cannot write an empty mesh");
  std::string out(84 + 50 * mesh.triangles().size(), '\0');
  const auto count = static_cast<std::uint32_t>(mesh.triangles().size());
  std::memcpy(out.data() + 80, &count, 4);
  for (std::size_t i = 0; i < mesh.triangles().size(); ++i) {
    char *rec = out.data() + 84 + 50 * i;
    // Normal of the stored float32 corners, so a reload writes the same bytes.
    const auto to_float = [](const Point3 &p) {
      return Point3{static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z)};
    };
    const auto [a, b, c] = mesh.corners(i);
    const Point3 area = cross(to_float(b) - to_float(a), to_float(c) - to_float(a));
    const Point3 n = norm(area) > 0.0 ? area * (1.0 / norm(area)) : Point3{0, 0, 0};
    const float vals[12] = {static_cast<float>(n.x), static_cast<float>(n.y), static_cast<float>(n.z),
                            static_cast<float>(a.x), static_cast<float>(a.y), static_cast<float>(a.z),
                            static_cast<float>(b.x), static_cast<float>(b.y), static_cast<float>(b.z),
                            static_cast<float>(c.x), static_cast<float>(c.y), static_cast<float>(c.z)};
    std::memcpy(rec, vals, sizeof(vals));
  }
  return out;
}

inline void save_stl(const TriangleMesh &mesh, const std::filesystem::path &path) {
  const auto bytes = stl_bytes(mesh);
  detail::write_file(path, bytes);
}

} // namespace printchain

#include "glyphfusion/truetype.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "glyphfusion/error.hpp"

namespace glyphfusion {

namespace {

constexpr uint32_t tag_value(const char* t) {
  return (static_cast<uint32_t>(static_cast<uint8_t>(t[0])) << 24) |
         (static_cast<uint32_t>(static_cast<uint8_t>(t[1])) << 16) |
         (static_cast<uint32_t>(static_cast<uint8_t>(t[2])) << 8) | static_cast<uint32_t>(static_cast<uint8_t>(t[3]));
}

// Bounds-checked big-endian reader.
class Reader {
 public:
  explicit Reader(const std::vector<uint8_t>& b) : b_(b) {}

  uint8_t u8(size_t off) const {
    check(off, 1);
    return b_[off];
  }
  uint16_t u16(size_t off) const {
    check(off, 2);
    return static_cast<uint16_t>((b_[off] << 8) | b_[off + 1]);
  }
  int16_t i16(size_t off) const { return static_cast<int16_t>(u16(off)); }
  uint32_t u32(size_t off) const {
    check(off, 4);
    return (static_cast<uint32_t>(b_[off]) << 24) | (static_cast<uint32_t>(b_[off + 1]) << 16) |
           (static_cast<uint32_t>(b_[off + 2]) << 8) | b_[off + 3];
  }
  double f2dot14(size_t off) const { return static_cast<double>(i16(off)) / 16384.0; }

 private:
  void check(size_t off, size_t n) const {
    if (off + n > b_.size() || off + n < off) raise(ErrorKind::kDecodeFailure, "font data truncated");
  }
  const std::vector<uint8_t>& b_;
};

struct RawPoint {
  double x;
  double y;
  bool on;
};

void flatten_quad(const OutlinePoint& p0, const OutlinePoint& c, const OutlinePoint& p1, Polyline& out) {
  constexpr int kSteps = 8;
  for (int i = 1; i <= kSteps; ++i) {
    const double t = static_cast<double>(i) / kSteps;
    const double u = 1.0 - t;
    out.push_back({u * u * p0.x + 2 * u * t * c.x + t * t * p1.x, u * u * p0.y + 2 * u * t * c.y + t * t * p1.y});
  }
}

Polyline flatten_contour(const std::vector<RawPoint>& pts) {
  Polyline out;
  const size_t n = pts.size();
  if (n < 2) return out;
  auto mid = [](const RawPoint& a, const RawPoint& b) { return OutlinePoint{(a.x + b.x) / 2, (a.y + b.y) / 2}; };

  // Start at an on-curve point, or at the implied midpoint of two off-curve points.
  size_t start = n;
  for (size_t i = 0; i < n; ++i) {
    if (pts[i].on) {
      start = i;
      break;
    }
  }
  OutlinePoint first;
  size_t begin;
  if (start == n) {
    first = mid(pts[0], pts[1]);
    begin = 1;
  } else {
    first = {pts[start].x, pts[start].y};
    begin = start + 1;
  }
  out.push_back(first);
  OutlinePoint current = first;
  std::optional<OutlinePoint> control;
  for (size_t k = 0; k < n; ++k) {
    const RawPoint& p = pts[(begin + k) % n];
    if (p.on) {
      OutlinePoint q{p.x, p.y};
      if (control) {
        flatten_quad(current, *control, q, out);
        control.reset();
      } else {
        out.push_back(q);
      }
      current = q;
    } else {
      OutlinePoint c{p.x, p.y};
      if (control) {
        OutlinePoint m{(control->x + c.x) / 2, (control->y + c.y) / 2};
        flatten_quad(current, *control, m, out);
        current = m;
      }
      control = c;
    }
  }
  if (control) flatten_quad(current, *control, first, out);
  return out;
}

// Exact squared Euclidean distance transform, 1-D pass (Felzenszwalb & Huttenlocher).
// Cells outside the feature set carry kFar, which behaves as infinity at these sizes.
constexpr double kFar = 1e20;

void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  auto fv = [&](int i) { return f[static_cast<size_t>(i)]; };
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      const int p = v[static_cast<size_t>(k)];
      s = ((fv(q) + static_cast<double>(q) * q) - (fv(p) + static_cast<double>(p) * p)) / (2.0 * (q - p));
      if (s <= z[static_cast<size_t>(k)] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[static_cast<size_t>(k)] = q;
    z[static_cast<size_t>(k)] = s;
    z[static_cast<size_t>(k) + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<size_t>(k) + 1] < q) ++k;
    const int p = v[static_cast<size_t>(k)];
    d[static_cast<size_t>(q)] = (static_cast<double>(q) - p) * (q - p) + fv(p);
  }
}

// Squared distance from every cell to the nearest cell where `target` holds.
std::vector<double> squared_distance_to(const std::vector<uint8_t>& mask, int n, bool target) {
  std::vector<double> grid(static_cast<size_t>(n) * n);
  for (size_t i = 0; i < grid.size(); ++i) grid[i] = (static_cast<bool>(mask[i]) == target) ? 0.0 : kFar;
  std::vector<double> f(static_cast<size_t>(n)), d(static_cast<size_t>(n)), z(static_cast<size_t>(n) + 1);
  std::vector<int> v(static_cast<size_t>(n));
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) f[static_cast<size_t>(y)] = grid[static_cast<size_t>(y) * n + x];
    edt_1d(f, d, v, z);
    for (int y = 0; y < n; ++y) grid[static_cast<size_t>(y) * n + x] = d[static_cast<size_t>(y)];
  }
  for (int y = 0; y < n; ++y) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(y) * n, n, f.begin());
    edt_1d(f, d, v, z);
    std::copy_n(d.begin(), n, grid.begin() + static_cast<std::ptrdiff_t>(y) * n);
  }
  return grid;
}

}  // namespace

TrueTypeFont TrueTypeFont::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open font " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return TrueTypeFont(std::move(bytes));
}

TrueTypeFont::TrueTypeFont(std::vector<uint8_t> bytes) : bytes_(std::move(bytes)) {
  Reader r(bytes_);
  uint32_t base = 0;
  uint32_t version = r.u32(0);
  if (version == tag_value("ttcf")) {
    base = r.u32(12);  // first face of a collection
    version = r.u32(base);
  }
  if (version == tag_value("OTTO")) raise(ErrorKind::kDecodeFailure, "CFF outlines are not supported");
  if (version != 0x00010000u && version != tag_value("true")) {
    raise(ErrorKind::kDecodeFailure, "not a TrueType font");
  }
  const uint16_t num_tables = r.u16(base + 4);
  for (uint16_t i = 0; i < num_tables; ++i) {
    const size_t rec = base + 12 + 16u * i;
    Table t{r.u32(rec + 8), r.u32(rec + 12)};
    if (static_cast<uint64_t>(t.offset) + t.length > bytes_.size()) {
      raise(ErrorKind::kDecodeFailure, "table extends past end of file");
    }
    tables_.emplace_back(r.u32(rec), t);
  }

  const Table head = table("head");
  units_per_em_ = r.u16(head.offset + 18);
  index_to_loc_format_ = r.i16(head.offset + 50);
  require(units_per_em_ > 0, ErrorKind::kDecodeFailure, "invalid unitsPerEm");
  num_glyphs_ = r.u16(table("maxp").offset + 4);
  table("loca");
  table("glyf");

  // Prefer full Unicode, then BMP Unicode, then symbol and Mac Roman subtables.
  const Table cmap = table("cmap");
  const uint16_t n_sub = r.u16(cmap.offset + 2);
  int best_rank = -1;
  for (uint16_t i = 0; i < n_sub; ++i) {
    const size_t rec = cmap.offset + 4 + 8u * i;
    const uint16_t platform = r.u16(rec);
    const uint16_t encoding = r.u16(rec + 2);
    const uint32_t off = cmap.offset + r.u32(rec + 4);
    const uint16_t format = r.u16(off);
    if (format != 0 && format != 4 && format != 6 && format != 12) continue;
    int rank = -1;
    if (platform == 3 && encoding == 10) rank = 5;
    else if (platform == 3 && encoding == 1) rank = 4;
    else if (platform == 0) rank = 3;
    else if (platform == 3 && encoding == 0) rank = 2;
    else if (platform == 1 && encoding == 0) rank = 1;
    if (rank > best_rank) {
      best_rank = rank;
      cmap_subtable_ = off;
      cmap_symbol_ = (platform == 3 && encoding == 0);
    }
  }
  require(best_rank >= 0, ErrorKind::kDecodeFailure, "no supported cmap subtable");
}

std::optional<TrueTypeFont::Table> TrueTypeFont::find_table(const char* tag) const {
  const uint32_t want = tag_value(tag);
  for (const auto& [t, tbl] : tables_) {
    if (t == want) return tbl;
  }
  return std::nullopt;
}

TrueTypeFont::Table TrueTypeFont::table(const char* tag) const {
  auto t = find_table(tag);
  require(t.has_value(), ErrorKind::kDecodeFailure, std::string("missing table ") + tag);
  return *t;
}

std::optional<uint16_t> TrueTypeFont::glyph_index(char32_t cp) const {
  Reader r(bytes_);
  const uint32_t off = cmap_subtable_;
  const uint16_t format = r.u16(off);
  auto lookup = [&](uint32_t c) -> uint32_t {
    switch (format) {
      case 0:
        return c < 256 ? r.u8(off + 6 + c) : 0;
      case 6: {
        const uint16_t first = r.u16(off + 6);
        const uint16_t count = r.u16(off + 8);
        return (c >= first && c < static_cast<uint32_t>(first) + count) ? r.u16(off + 10 + 2 * (c - first)) : 0;
      }
      case 4: {
        if (c > 0xFFFF) return 0;
        const uint16_t segs = r.u16(off + 6) / 2;
        const size_t ends = off + 14;
        const size_t starts = ends + 2u * segs + 2;
        const size_t deltas = starts + 2u * segs;
        const size_t ranges = deltas + 2u * segs;
        for (uint16_t s = 0; s < segs; ++s) {
          const uint16_t end = r.u16(ends + 2u * s);
          if (c > end) continue;
          const uint16_t start = r.u16(starts + 2u * s);
          if (c < start) return 0;
          const uint16_t delta = r.u16(deltas + 2u * s);
          const uint16_t range = r.u16(ranges + 2u * s);
          if (range == 0) return (c + delta) & 0xFFFFu;
          const size_t addr = ranges + 2u * s + range + 2u * (c - start);
          const uint16_t g = r.u16(addr);
          return g == 0 ? 0 : (g + delta) & 0xFFFFu;
        }
        return 0;
      }
      case 12: {
        const uint32_t groups = r.u32(off + 12);
        for (uint32_t gi = 0; gi < groups; ++gi) {
          const size_t g = off + 16 + 12u * gi;
          const uint32_t s = r.u32(g), e = r.u32(g + 4);
          if (c >= s && c <= e) return r.u32(g + 8) + (c - s);
        }
        return 0;
      }
      default:
        return 0;
    }
  };
  uint32_t g = lookup(static_cast<uint32_t>(cp));
  if (g == 0 && cmap_symbol_) g = lookup(0xF000u + static_cast<uint32_t>(cp));
  if (g == 0 || g >= static_cast<uint32_t>(num_glyphs_)) return std::nullopt;
  return static_cast<uint16_t>(g);
}

std::vector<Polyline> TrueTypeFont::outline(uint16_t glyph) const {
  std::vector<Polyline> out;
  const double identity[6] = {1, 0, 0, 1, 0, 0};
  load_glyph(glyph, 0, identity, out);
  return out;
}

void TrueTypeFont::load_glyph(uint16_t glyph, int depth, const double m[6], std::vector<Polyline>& out) const {
  require(depth < 8, ErrorKind::kDecodeFailure, "composite glyph nesting too deep");
  require(glyph < num_glyphs_, ErrorKind::kDecodeFailure, "glyph index out of range");
  Reader r(bytes_);
  const Table loca = table("loca");
  const Table glyf = table("glyf");
  uint32_t start, end;
  if (index_to_loc_format_ == 0) {
    start = 2u * r.u16(loca.offset + 2u * glyph);
    end = 2u * r.u16(loca.offset + 2u * glyph + 2);
  } else {
    start = r.u32(loca.offset + 4u * glyph);
    end = r.u32(loca.offset + 4u * glyph + 4);
  }
  if (end <= start) return;
  require(end <= glyf.length, ErrorKind::kDecodeFailure, "glyph outside glyf table");
  const size_t g = glyf.offset + start;
  const int16_t n_contours = r.i16(g);
  auto transform = [&](double x, double y) {
    return OutlinePoint{m[0] * x + m[2] * y + m[4], m[1] * x + m[3] * y + m[5]};
  };

  if (n_contours >= 0) {
    std::vector<uint16_t> end_pts(static_cast<size_t>(n_contours));
    for (int i = 0; i < n_contours; ++i) end_pts[static_cast<size_t>(i)] = r.u16(g + 10 + 2u * i);
    const size_t n_points = n_contours == 0 ? 0 : static_cast<size_t>(end_pts.back()) + 1;
    size_t p = g + 10 + 2u * n_contours;
    const uint16_t ins_len = r.u16(p);
    p += 2 + ins_len;
    std::vector<uint8_t> flags;
    flags.reserve(n_points);
    while (flags.size() < n_points) {
      const uint8_t f = r.u8(p++);
      flags.push_back(f);
      if (f & 0x08) {
        uint8_t rep = r.u8(p++);
        while (rep-- > 0 && flags.size() < n_points) flags.push_back(f);
      }
    }
    std::vector<RawPoint> pts(n_points);
    int32_t v = 0;
    for (size_t i = 0; i < n_points; ++i) {
      const uint8_t f = flags[i];
      if (f & 0x02) {
        const uint8_t dx = r.u8(p++);
        v += (f & 0x10) ? dx : -static_cast<int32_t>(dx);
      } else if (!(f & 0x10)) {
        v += r.i16(p);
        p += 2;
      }
      pts[i].x = v;
      pts[i].on = (f & 0x01) != 0;
    }
    v = 0;
    for (size_t i = 0; i < n_points; ++i) {
      const uint8_t f = flags[i];
      if (f & 0x04) {
        const uint8_t dy = r.u8(p++);
        v += (f & 0x20) ? dy : -static_cast<int32_t>(dy);
      } else if (!(f & 0x20)) {
        v += r.i16(p);
        p += 2;
      }
      pts[i].y = v;
    }
    for (auto& pt : pts) {
      auto q = transform(pt.x, pt.y);
      pt.x = q.x;
      pt.y = q.y;
    }
    size_t first = 0;
    for (uint16_t e : end_pts) {
      require(e >= first && e < n_points, ErrorKind::kDecodeFailure, "bad contour end point");
      std::vector<RawPoint> contour(pts.begin() + static_cast<std::ptrdiff_t>(first),
                                    pts.begin() + static_cast<std::ptrdiff_t>(e) + 1);
      auto poly = flatten_contour(contour);
      if (poly.size() >= 3) out.push_back(std::move(poly));
      first = static_cast<size_t>(e) + 1;
    }
    return;
  }

  size_t p = g + 10;
  while (true) {
    const uint16_t flags = r.u16(p);
    const uint16_t component = r.u16(p + 2);
    p += 4;
    double dx = 0.0, dy = 0.0;
    if (flags & 0x0001) {
      if (flags & 0x0002) {
        dx = r.i16(p);
        dy = r.i16(p + 2);
      }
      p += 4;
    } else {
      if (flags & 0x0002) {
        dx = static_cast<int8_t>(r.u8(p));
        dy = static_cast<int8_t>(r.u8(p + 1));
      }
      p += 2;
    }
    double a = 1, b = 0, c = 0, d = 1;
    if (flags & 0x0008) {
      a = d = r.f2dot14(p);
      p += 2;
    } else if (flags & 0x0040) {
      a = r.f2dot14(p);
      d = r.f2dot14(p + 2);
      p += 4;
    } else if (flags & 0x0080) {
      a = r.f2dot14(p);
      b = r.f2dot14(p + 2);
      c = r.f2dot14(p + 4);
      d = r.f2dot14(p + 6);
      p += 8;
    }
    // Compose child transform with the parent: parent * child.
    const double child[6] = {a, b, c, d, dx, dy};
    const double composed[6] = {
        m[0] * child[0] + m[2] * child[1],          m[1] * child[0] + m[3] * child[1],
        m[0] * child[2] + m[2] * child[3],          m[1] * child[2] + m[3] * child[3],
        m[0] * child[4] + m[2] * child[5] + m[4],   m[1] * child[4] + m[3] * child[5] + m[5],
    };
    load_glyph(component, depth + 1, composed, out);
    if (!(flags & 0x0020)) break;
  }
}

GlyphImage rasterize_glyph(const TrueTypeFont& font, char letter, int side, const RasterOptions& opts) {
  require(side > 0 && opts.supersample > 0 && opts.box_fraction > 0.0 && opts.box_fraction <= 1.0,
          ErrorKind::kInvalidArgument, "invalid raster options");
  auto gid = font.glyph_index(static_cast<unsigned char>(letter));
  require(gid.has_value(), ErrorKind::kMissingGlyph, std::string("font has no glyph for '") + letter + "'");
  const auto contours = font.outline(*gid);
  require(!contours.empty(), ErrorKind::kMissingGlyph, std::string("glyph for '") + letter + "' has no outline");

  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  for (const auto& c : contours) {
    for (const auto& p : c) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
  }
  const double extent = std::max(x1 - x0, y1 - y0);
  require(extent > 0.0, ErrorKind::kMissingGlyph, std::string("glyph for '") + letter + "' is degenerate");

  const int ss = opts.supersample;
  const int n = side * ss;
  const double scale = opts.box_fraction * n / extent;
  const double cx = (x0 + x1) / 2.0, cy = (y0 + y1) / 2.0;
  // Hi-res pixel coordinates, y flipped so row 0 is the top.
  std::vector<std::vector<OutlinePoint>> poly;
  poly.reserve(contours.size());
  for (const auto& c : contours) {
    std::vector<OutlinePoint> q;
    q.reserve(c.size());
    for (const auto& p : c) q.push_back({(p.x - cx) * scale + n / 2.0, n / 2.0 - (p.y - cy) * scale});
    poly.push_back(std::move(q));
  }

  std::vector<uint8_t> mask(static_cast<size_t>(n) * n, 0);
  std::vector<std::pair<double, int>> crossings;
  for (int row = 0; row < n; ++row) {
    const double yc = row + 0.5;
    crossings.clear();
    for (const auto& c : poly) {
      const size_t m = c.size();
      for (size_t i = 0; i < m; ++i) {
        const auto& a = c[i];
        const auto& b = c[(i + 1) % m];
        if ((a.y <= yc && b.y > yc) || (b.y <= yc && a.y > yc)) {
          const double t = (yc - a.y) / (b.y - a.y);
          crossings.emplace_back(a.x + t * (b.x - a.x), b.y > a.y ? 1 : -1);
        }
      }
    }
    std::sort(crossings.begin(), crossings.end());
    int winding = 0;
    for (size_t i = 0; i + 1 < crossings.size(); ++i) {
      winding += crossings[i].second;
      if (winding == 0) continue;
      const int xa = std::max(0, static_cast<int>(std::ceil(crossings[i].first - 0.5)));
      const int xb = std::min(n - 1, static_cast<int>(std::floor(crossings[i + 1].first - 0.5)));
      for (int x = xa; x <= xb; ++x) mask[static_cast<size_t>(row) * n + x] = 1;
    }
  }

  if (opts.stroke_offset != 0.0) {
    const double r = std::abs(opts.stroke_offset) * ss;
    const double r2 = r * r;
    if (opts.stroke_offset > 0.0) {
      auto dist = squared_distance_to(mask, n, true);
      for (size_t i = 0; i < mask.size(); ++i) mask[i] = dist[i] <= r2 ? 1 : 0;
    } else {
      auto dist = squared_distance_to(mask, n, false);
      for (size_t i = 0; i < mask.size(); ++i) mask[i] = dist[i] > r2 ? 1 : 0;
    }
  }

  GlyphImage img(side);
  const float norm = 1.0f / static_cast<float>(ss * ss);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      int count = 0;
      for (int sy = 0; sy < ss; ++sy) {
        const uint8_t* rowp = mask.data() + static_cast<size_t>(y * ss + sy) * n + static_cast<size_t>(x) * ss;
        for (int sx = 0; sx < ss; ++sx) count += rowp[sx];
      }
      img.set(y, x, std::min(1.0f, static_cast<float>(count) * norm));
    }
  }
  return img;
}

GlyphImage rasterize_glyph(const std::filesystem::path& font_file, char letter, int side, const RasterOptions& opts) {
  return rasterize_glyph(TrueTypeFont::load(font_file), letter, side, opts);
}

}  // namespace glyphfusion

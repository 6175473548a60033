#include "mapfuse/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "mapfuse/pointset.hpp"

namespace mapfuse {

void GenConfig::validate() const {
  if (t_frames < 1 || h < 1 || w < 1 || c_obs < kNumMapClasses || p < 2)
    throw std::invalid_argument("gen config: bad grid/frame extents");
  if (min_boundaries > max_boundaries || min_dividers > max_dividers ||
      min_crossings > max_crossings || min_boundaries < 0)
    throw std::invalid_argument("gen config: inverted element count ranges");
  if (max_boundaries + max_dividers + max_crossings < 1)
    throw std::invalid_argument("gen config: world would contain zero elements");
  if (occlusion_fraction < 0.0 || occlusion_fraction >= 1.0)
    throw std::invalid_argument("gen config: occlusion fraction must be in [0, 1)");
  if (x_max <= 0.0 || y_max <= 0.0 || step_m <= 0.0)
    throw std::invalid_argument("gen config: non-positive geometry");
}

namespace {

constexpr double kCenterlineDs = 2.0;
constexpr double kRoadHalf = 8.0;

struct Centerline {
  std::vector<double> xs, ys, headings;  // sampled every kCenterlineDs meters
  double s0;                             // arc position of sample 0

  // linear interpolation at arc position s
  void eval(double s, double& x, double& y, double& heading) const {
    const double f = (s - s0) / kCenterlineDs;
    const int64_t n = static_cast<int64_t>(xs.size());
    int64_t i = static_cast<int64_t>(std::floor(f));
    i = std::clamp<int64_t>(i, 0, n - 2);
    const double t = std::clamp(f - static_cast<double>(i), 0.0, 1.0);
    x = xs[i] + t * (xs[i + 1] - xs[i]);
    y = ys[i] + t * (ys[i + 1] - ys[i]);
    heading = headings[i] + t * (headings[i + 1] - headings[i]);
  }
};

Centerline make_centerline(double s_begin, double s_end, Rng& rng) {
  Centerline c;
  c.s0 = s_begin;
  const int64_t n = static_cast<int64_t>(std::ceil((s_end - s_begin) / kCenterlineDs)) + 1;
  double x = s_begin, y = 0.0, heading = 0.0, curvature = 0.0;
  // integrate a smoothed curvature walk; curvature bounded for a drivable road
  for (int64_t i = 0; i < n; ++i) {
    c.xs.push_back(x);
    c.ys.push_back(y);
    c.headings.push_back(heading);
    curvature = 0.9 * curvature + 0.1 * rng.normal(0.0, 0.035);
    curvature = std::clamp(curvature, -0.04, 0.04);
    heading += curvature * kCenterlineDs;
    heading = std::clamp(heading, -0.6, 0.6);
    x += std::cos(heading) * kCenterlineDs;
    y += std::sin(heading) * kCenterlineDs;
  }
  return c;
}

std::vector<double> offset_polyline(const Centerline& c, double offset) {
  std::vector<double> pts;
  pts.reserve(c.xs.size() * 2);
  for (size_t i = 0; i < c.xs.size(); ++i) {
    const double nx = -std::sin(c.headings[i]);
    const double ny = std::cos(c.headings[i]);
    pts.push_back(c.xs[i] + offset * nx);
    pts.push_back(c.ys[i] + offset * ny);
  }
  return pts;
}

// world -> ego
void to_ego(const Pose& pose, double wx, double wy, double& ex, double& ey) {
  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  const double dx = wx - pose.x, dy = wy - pose.y;
  ex = c * dx + s * dy;
  ey = -s * dx + c * dy;
}

bool in_range(double x, double y, const GenConfig& cfg) {
  return x >= -cfg.x_max && x <= cfg.x_max && y >= -cfg.y_max && y <= cfg.y_max;
}

// Dense-sampled ego-frame pieces of one element clipped to the range
// rectangle. Each piece is a run of in-range samples, (x,y) pairs.
std::vector<std::vector<double>> clipped_pieces(const MapElement& el, const Pose& pose,
                                                const GenConfig& cfg) {
  constexpr double kSampleStep = 0.15;
  std::vector<std::vector<double>> pieces;
  std::vector<double> current;
  const auto& pl = el.polyline;
  const int64_t n = static_cast<int64_t>(pl.size()) / 2;
  for (int64_t i = 0; i + 1 < n; ++i) {
    const double ax = pl[2 * i], ay = pl[2 * i + 1];
    const double bx = pl[2 * (i + 1)], by = pl[2 * (i + 1) + 1];
    const double seg_len = std::hypot(bx - ax, by - ay);
    const int64_t steps = std::max<int64_t>(1, static_cast<int64_t>(seg_len / kSampleStep));
    const int64_t from = (i == 0) ? 0 : 1;  // avoid duplicating segment joints
    for (int64_t k = from; k <= steps; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(steps);
      double ex, ey;
      to_ego(pose, ax + t * (bx - ax), ay + t * (by - ay), ex, ey);
      if (in_range(ex, ey, cfg)) {
        current.push_back(ex);
        current.push_back(ey);
      } else if (!current.empty()) {
        pieces.push_back(std::move(current));
        current.clear();
      }
    }
  }
  if (!current.empty()) pieces.push_back(std::move(current));
  return pieces;
}

void paint_piece(Tensor<float>& raster, const std::vector<double>& piece, int64_t channel,
                 const GenConfig& cfg) {
  const GridGeometry g{cfg.h, cfg.w, cfg.x_max, cfg.y_max};
  const int64_t hw = cfg.h * cfg.w;
  const int64_t n = static_cast<int64_t>(piece.size()) / 2;
  for (int64_t i = 0; i < n; ++i) {
    const int64_t col = static_cast<int64_t>(std::llround(g.x_to_col(piece[2 * i])));
    const int64_t row = static_cast<int64_t>(std::llround(g.y_to_row(piece[2 * i + 1])));
    if (col < 0 || col >= cfg.w || row < 0 || row >= cfg.h) continue;
    raster[channel * hw + row * cfg.w + col] = 1.0f;
  }
}

bool inside_occluder(const Occluder& o, double wx, double wy) {
  return std::abs(wx - o.cx) <= o.half_w && std::abs(wy - o.cy) <= o.half_h;
}

Occluder spawn_one(const Pose& pose, const GenConfig& cfg, Rng& rng) {
  // per-rect coverage q solving 1-(1-q)^k = f, inflated for the part of a
  // rectangle that hangs outside the range
  const double k = static_cast<double>(std::max<int64_t>(1, cfg.n_occluders));
  const double q = 1.0 - std::pow(1.0 - cfg.occlusion_fraction, 1.0 / k);
  const double area = q * (4.0 * cfg.x_max * cfg.y_max) / 0.75;
  const double aspect = rng.uniform(0.6, 1.8);
  const double half_w = 0.5 * std::sqrt(area * aspect);
  const double half_h = 0.5 * std::sqrt(area / aspect);
  const double ex = rng.uniform(-cfg.x_max, cfg.x_max);
  const double ey = rng.uniform(-cfg.y_max, cfg.y_max);
  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  Occluder o;
  o.cx = pose.x + c * ex - s * ey;
  o.cy = pose.y + s * ex + c * ey;
  o.half_w = half_w;
  o.half_h = half_h;
  o.vx = rng.uniform(-0.6, 0.6);
  o.vy = rng.uniform(-0.6, 0.6);
  return o;
}

}  // namespace

OcclusionModel spawn_occluders(const Pose& pose, const GenConfig& cfg, Rng& rng) {
  OcclusionModel occ;
  for (int64_t i = 0; i < cfg.n_occluders; ++i) occ.rects.push_back(spawn_one(pose, cfg, rng));
  return occ;
}

void advance_occluders(OcclusionModel& occ, const Pose& pose, const GenConfig& cfg, Rng& rng) {
  for (auto& o : occ.rects) {
    if (rng.uniform() < cfg.occluder_persistence) {
      o.cx += o.vx;
      o.cy += o.vy;
    } else {
      o = spawn_one(pose, cfg, rng);
    }
  }
}

double occluded_cell_fraction(const OcclusionModel& occ, const Pose& pose,
                              const GenConfig& cfg) {
  const GridGeometry g{cfg.h, cfg.w, cfg.x_max, cfg.y_max};
  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  int64_t covered = 0;
  for (int64_t i = 0; i < cfg.h; ++i)
    for (int64_t j = 0; j < cfg.w; ++j) {
      const double ex = g.col_to_x(static_cast<double>(j));
      const double ey = g.row_to_y(static_cast<double>(i));
      const double wx = pose.x + c * ex - s * ey;
      const double wy = pose.y + s * ex + c * ey;
      for (const auto& o : occ.rects)
        if (inside_occluder(o, wx, wy)) {
          ++covered;
          break;
        }
    }
  return static_cast<double>(covered) / static_cast<double>(cfg.h * cfg.w);
}

Tensor<float> render_clean(const std::vector<MapElement>& world, const Pose& pose,
                           const GenConfig& cfg) {
  Tensor<float> raster({cfg.c_obs, cfg.h, cfg.w});
  for (const auto& el : world)
    for (const auto& piece : clipped_pieces(el, pose, cfg))
      paint_piece(raster, piece, static_cast<int64_t>(el.cls), cfg);
  return raster;
}

Tensor<float> render_observation(const std::vector<MapElement>& world, const Pose& pose,
                                 const OcclusionModel& occ, double noise_sigma,
                                 const GenConfig& cfg, Rng& noise_rng) {
  Tensor<float> raster = render_clean(world, pose, cfg);
  if (!occ.rects.empty()) {
    const GridGeometry g{cfg.h, cfg.w, cfg.x_max, cfg.y_max};
    const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
    const int64_t hw = cfg.h * cfg.w;
    for (int64_t i = 0; i < cfg.h; ++i)
      for (int64_t j = 0; j < cfg.w; ++j) {
        const double ex = g.col_to_x(static_cast<double>(j));
        const double ey = g.row_to_y(static_cast<double>(i));
        const double wx = pose.x + c * ex - s * ey;
        const double wy = pose.y + s * ex + c * ey;
        for (const auto& o : occ.rects)
          if (inside_occluder(o, wx, wy)) {
            for (int64_t cc = 0; cc < cfg.c_obs; ++cc) raster[cc * hw + i * cfg.w + j] = 0.0f;
            break;
          }
      }
  }
  if (noise_sigma > 0.0)
    for (int64_t i = 0; i < raster.size(); ++i)
      raster[i] += static_cast<float>(noise_rng.normal(0.0, noise_sigma));
  return raster;
}

std::vector<GtPolyline> ego_ground_truth(const std::vector<MapElement>& world, const Pose& pose,
                                         const GenConfig& cfg) {
  std::vector<GtPolyline> out;
  for (const auto& el : world)
    for (const auto& piece : clipped_pieces(el, pose, cfg)) {
      if (piece.size() < 4) continue;
      if (polyline_length(piece) < cfg.min_gt_length) continue;
      const std::vector<double> rs = resample_polyline(piece, cfg.p);
      GtPolyline gt;
      gt.cls = static_cast<uint8_t>(el.cls);
      gt.points = Tensor<float>({cfg.p, 2});
      for (int64_t k = 0; k < 2 * cfg.p; ++k) gt.points[k] = static_cast<float>(rs[k]);
      out.push_back(std::move(gt));
    }
  return out;
}

Scenario generate_scenario(uint64_t seed, const GenConfig& cfg) {
  cfg.validate();
  Rng world_rng = Rng::with_stream(seed, 0);
  Rng ego_rng = Rng::with_stream(seed, 1);
  Rng occ_rng = Rng::with_stream(seed, 2);
  Rng noise_rng = Rng::with_stream(seed, 3);

  Scenario sc;
  sc.seed = seed;

  const double travel = cfg.step_m * static_cast<double>(cfg.t_frames);
  const double margin = cfg.x_max + 15.0;
  const Centerline center = make_centerline(-margin, travel + margin, world_rng);

  // boundaries: road edges first, then outer edges
  const int64_t n_b = world_rng.uniform_int(cfg.min_boundaries, cfg.max_boundaries);
  const double edge_offsets[4] = {kRoadHalf, -kRoadHalf, kRoadHalf + 5.5, -(kRoadHalf + 5.5)};
  for (int64_t i = 0; i < n_b; ++i)
    sc.elements.push_back(
        MapElement{MapClass::kRoadBoundary, offset_polyline(center, edge_offsets[i % 4])});

  const int64_t n_d = world_rng.uniform_int(cfg.min_dividers, cfg.max_dividers);
  for (int64_t i = 0; i < n_d; ++i) {
    const double off = n_d == 1 ? 0.0
                                : -(kRoadHalf - 2.5) +
                                      (2.0 * (kRoadHalf - 2.5)) * static_cast<double>(i) /
                                          static_cast<double>(n_d - 1);
    sc.elements.push_back(MapElement{MapClass::kLaneDivider, offset_polyline(center, off)});
  }

  const int64_t n_c = world_rng.uniform_int(cfg.min_crossings, cfg.max_crossings);
  for (int64_t i = 0; i < n_c; ++i) {
    const double s = world_rng.uniform(-10.0, travel + cfg.x_max);
    double x, y, heading;
    center.eval(s, x, y, heading);
    const double nx = -std::sin(heading), ny = std::cos(heading);
    const double half = kRoadHalf + 1.0;
    sc.elements.push_back(MapElement{
        MapClass::kPedestrianCrossing,
        {x - half * nx, y - half * ny, x + half * nx, y + half * ny}});
  }

  // ego trajectory along the corridor with mild pose noise
  std::vector<Pose> poses;
  for (int64_t k = 0; k < cfg.t_frames; ++k) {
    double x, y, heading;
    center.eval(cfg.step_m * static_cast<double>(k), x, y, heading);
    const double nx = -std::sin(heading), ny = std::cos(heading);
    const double lat = ego_rng.uniform(-0.3, 0.3);
    Pose p;
    p.x = x + lat * nx;
    p.y = y + lat * ny;
    p.yaw = heading + ego_rng.uniform(-0.03, 0.03);
    poses.push_back(p);
  }

  OcclusionModel occ = spawn_occluders(poses[0], cfg, occ_rng);
  for (int64_t k = 0; k < cfg.t_frames; ++k) {
    if (k > 0) advance_occluders(occ, poses[static_cast<size_t>(k)], cfg, occ_rng);
    FrameData fd;
    fd.pose = poses[static_cast<size_t>(k)];
    fd.raster = render_observation(sc.elements, fd.pose, occ, cfg.noise_sigma, cfg, noise_rng);
    fd.gt = ego_ground_truth(sc.elements, fd.pose, cfg);
    sc.frames.push_back(std::move(fd));
  }
  return sc;
}

Dataset generate_dataset(uint64_t base_seed, int64_t count, const GenConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.t = cfg.t_frames;
  ds.h = cfg.h;
  ds.w = cfg.w;
  ds.c_obs = cfg.c_obs;
  ds.p = cfg.p;
  Rng seeder(base_seed);
  for (int64_t i = 0; i < count; ++i)
    ds.scenarios.push_back(generate_scenario(seeder.fork(static_cast<uint64_t>(i)).next_u64(), cfg));
  return ds;
}

// ---- binary container ----

namespace {

constexpr char kDatasetMagic[] = "MMSYN1\n";  // 7 bytes

void put_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  put_bytes(os, b, 4);
}
void put_u64(std::ostream& os, uint64_t v) {
  put_u32(os, static_cast<uint32_t>(v));
  put_u32(os, static_cast<uint32_t>(v >> 32));
}
void put_f32(std::ostream& os, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

void get_bytes(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("dataset: truncated file");
}
uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  get_bytes(is, b, 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
uint64_t get_u64(std::istream& is) {
  const uint64_t lo = get_u32(is);
  const uint64_t hi = get_u32(is);
  return lo | (hi << 32);
}
float get_f32(std::istream& is) {
  const uint32_t u = get_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("dataset: cannot open for writing: " + path);
  put_bytes(os, kDatasetMagic, 7);
  put_u32(os, ds.version);
  put_u32(os, static_cast<uint32_t>(ds.scenarios.size()));
  put_u32(os, static_cast<uint32_t>(ds.t));
  put_u32(os, static_cast<uint32_t>(ds.h));
  put_u32(os, static_cast<uint32_t>(ds.w));
  put_u32(os, static_cast<uint32_t>(ds.c_obs));
  put_u32(os, static_cast<uint32_t>(ds.p));
  for (const auto& sc : ds.scenarios) {
    put_u64(os, sc.seed);
    put_u32(os, static_cast<uint32_t>(sc.elements.size()));
    for (const auto& el : sc.elements) {
      const unsigned char cls = static_cast<unsigned char>(el.cls);
      put_bytes(os, &cls, 1);
      put_u32(os, static_cast<uint32_t>(el.polyline.size() / 2));
      for (double v : el.polyline) put_f32(os, static_cast<float>(v));
    }
    for (const auto& fr : sc.frames) {
      put_f32(os, static_cast<float>(fr.pose.x));
      put_f32(os, static_cast<float>(fr.pose.y));
      put_f32(os, static_cast<float>(fr.pose.yaw));
      for (int64_t i = 0; i < fr.raster.size(); ++i) put_f32(os, fr.raster[i]);
      put_u32(os, static_cast<uint32_t>(fr.gt.size()));
      for (const auto& gt : fr.gt) {
        put_bytes(os, &gt.cls, 1);
        for (int64_t i = 0; i < gt.points.size(); ++i) put_f32(os, gt.points[i]);
      }
    }
  }
  if (!os) throw std::runtime_error("dataset: write failed: " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("dataset: cannot open: " + path);
  char magic[7];
  get_bytes(is, magic, 7);
  if (std::memcmp(magic, kDatasetMagic, 7) != 0)
    throw std::runtime_error("dataset: bad magic in " + path);
  Dataset ds;
  ds.version = get_u32(is);
  if (ds.version != 1) throw std::runtime_error("dataset: unsupported version");
  const uint32_t count = get_u32(is);
  ds.t = get_u32(is);
  ds.h = get_u32(is);
  ds.w = get_u32(is);
  ds.c_obs = get_u32(is);
  ds.p = get_u32(is);
  for (uint32_t s = 0; s < count; ++s) {
    Scenario sc;
    sc.seed = get_u64(is);
    const uint32_t n_el = get_u32(is);
    for (uint32_t e = 0; e < n_el; ++e) {
      MapElement el;
      unsigned char cls;
      get_bytes(is, &cls, 1);
      el.cls = static_cast<MapClass>(cls);
      const uint32_t n_pts = get_u32(is);
      el.polyline.resize(2 * n_pts);
      for (auto& v : el.polyline) v = static_cast<double>(get_f32(is));
      sc.elements.push_back(std::move(el));
    }
    for (int64_t f = 0; f < ds.t; ++f) {
      FrameData fd;
      fd.pose.x = static_cast<double>(get_f32(is));
      fd.pose.y = static_cast<double>(get_f32(is));
      fd.pose.yaw = static_cast<double>(get_f32(is));
      fd.raster = Tensor<float>({ds.c_obs, ds.h, ds.w});
      for (int64_t i = 0; i < fd.raster.size(); ++i) fd.raster[i] = get_f32(is);
      const uint32_t n_gt = get_u32(is);
      for (uint32_t g = 0; g < n_gt; ++g) {
        GtPolyline gt;
        get_bytes(is, &gt.cls, 1);
        gt.points = Tensor<float>({ds.p, 2});
        for (int64_t i = 0; i < gt.points.size(); ++i) gt.points[i] = get_f32(is);
        fd.gt.push_back(std::move(gt));
      }
      sc.frames.push_back(std::move(fd));
    }
    ds.scenarios.push_back(std::move(sc));
  }
  return ds;
}

}  // namespace mapfuse

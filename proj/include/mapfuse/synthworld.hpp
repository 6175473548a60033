#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mapfuse/geometry.hpp"
#include "mapfuse/rng.hpp"
#include "mapfuse/tensor.hpp"

namespace mapfuse {

enum class MapClass : uint8_t {
  kPedestrianCrossing = 0,
  kLaneDivider = 1,
  kRoadBoundary = 2,
};

inline const char* to_string(MapClass c) {
  switch (c) {
    case MapClass::kPedestrianCrossing: return "ped";
    case MapClass::kLaneDivider: return "div";
    case MapClass::kRoadBoundary: return "bou";
  }
  return "?";
}

constexpr int64_t kNumMapClasses = 3;

// World-frame polyline element, variable length (>= 2 points).
struct MapElement {
  MapClass cls;
  std::vector<double> polyline;  // (x,y) pairs
};

// Ego-frame ground truth, resampled to P points.
struct GtPolyline {
  uint8_t cls;
  Tensor<float> points;  // [P, 2]
};

struct FrameData {
  Pose pose;
  Tensor<float> raster;  // [C_obs, H, W]
  std::vector<GtPolyline> gt;
};

struct Scenario {
  uint64_t seed = 0;
  std::vector<MapElement> elements;
  std::vector<FrameData> frames;
};

struct GenConfig {
  int64_t t_frames = 10;
  int64_t h = 50;
  int64_t w = 100;
  int64_t c_obs = 3;
  int64_t p = 8;  // GT resample points
  double x_max = 30.0;
  double y_max = 15.0;
  int64_t min_boundaries = 2, max_boundaries = 4;
  int64_t min_dividers = 2, max_dividers = 6;
  int64_t min_crossings = 1, max_crossings = 4;
  double noise_sigma = 0.05;
  double occlusion_fraction = 0.4;
  int64_t n_occluders = 6;
  double occluder_persistence = 0.8;
  double step_m = 3.0;       // ego forward motion per frame
  double min_gt_length = 2.0;  // drop clipped slivers shorter than this

  void validate() const;
};

// Axis-aligned (in world frame) moving occluder rectangle.
struct Occluder {
  double cx, cy, half_w, half_h;
  double vx, vy;
};

struct OcclusionModel {
  std::vector<Occluder> rects;
};

// Deterministic in seed: polyline world, smoothed ego trajectory along the
// road corridor, per-frame occluded noisy rasters, and clipped ego-frame GT.
Scenario generate_scenario(uint64_t seed, const GenConfig& cfg);

// Visible-element rasterization with occlusion and additive noise. Exposed
// separately so tests can drive the occlusion statistics directly.
Tensor<float> render_observation(const std::vector<MapElement>& world, const Pose& pose,
                                 const OcclusionModel& occ, double noise_sigma,
                                 const GenConfig& cfg, Rng& noise_rng);

// Clean rasterization (no occlusion, no noise).
Tensor<float> render_clean(const std::vector<MapElement>& world, const Pose& pose,
                           const GenConfig& cfg);

// Fraction of grid cells covered by the occlusion model, ego frame.
double occluded_cell_fraction(const OcclusionModel& occ, const Pose& pose, const GenConfig& cfg);

// Ego-frame ground truth: world elements clipped to the perception range and
// resampled to cfg.p points each.
std::vector<GtPolyline> ego_ground_truth(const std::vector<MapElement>& world, const Pose& pose,
                                         const GenConfig& cfg);

// Occluder lifecycle: persist-and-drift with probability `persistence`,
// otherwise respawn near the current ego range.
OcclusionModel spawn_occluders(const Pose& pose, const GenConfig& cfg, Rng& rng);
void advance_occluders(OcclusionModel& occ, const Pose& pose, const GenConfig& cfg, Rng& rng);

// ---- dataset container ----

struct Dataset {
  uint32_t version = 1;
  int64_t t = 0, h = 0, w = 0, c_obs = 0, p = 0;
  std::vector<Scenario> scenarios;
};

// Bit-exact binary round trip, magic "MMSYN1\n".
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

Dataset generate_dataset(uint64_t base_seed, int64_t count, const GenConfig& cfg);

}  // namespace mapfuse

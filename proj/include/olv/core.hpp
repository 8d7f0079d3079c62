#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "olv/vec3.hpp"

namespace olv {

struct PhasePoint {
  Vec3 q;  // position
  Vec3 p;  // momentum
};

struct UniverseSpec {
  Vec3 box_lengths{10.0, 10.0, 10.0};
  std::array<bool, 3> periodic{true, true, true};
  std::size_t n_total = 0;
  double mass = 1.0;
  double temperature = 1.0;
  std::uint64_t seed = 1;

  double volume() const { return box_lengths.x * box_lengths.y * box_lengths.z; }
  double min_length() const;

  // Wraps periodic axes into [0, L); walls are left untouched.
  Vec3 wrap(Vec3 q) const;
  // Minimum-image separation a - b.
  Vec3 minimum_image(Vec3 d) const;
};

// Axis-aligned open domain Omega inside the universe, with a reservoir-side
// boundary layer Delta of the given thickness around it.
struct RegionSpec {
  Vec3 omega_lo;
  Vec3 omega_hi;
  double delta_thickness = 0.0;

  Vec3 extent() const { return omega_hi - omega_lo; }
  double volume() const;
  double surface_area() const;
  bool contains(const Vec3& q) const;  // half-open [lo, hi) per axis
};

enum class Region : std::uint8_t { InsideOmega = 0, DeltaLayer = 1, Outer = 2 };

std::string_view to_string(Region r) noexcept;

struct SimState {
  double time = 0.0;
  std::vector<PhasePoint> particles;
};

// Throws ConfigInvalid when the universe or region violates its invariants.
void validate(const UniverseSpec& universe);
void validate(const UniverseSpec& universe, const RegionSpec& region);

// Distance from q (already wrapped) to the closed box Omega, using the
// nearest periodic image. Zero for points inside Omega.
double distance_to_omega(const Vec3& q, const UniverseSpec& universe, const RegionSpec& region);

// Distance from an interior point to the nearest face of Omega, together with
// the outward unit normal of that face.
struct FaceDistance {
  double distance = 0.0;
  int face = 0;  // 0:-x 1:+x 2:-y 3:+y 4:-z 5:+z
  Vec3 outward_normal;
};
FaceDistance nearest_face(const Vec3& q, const RegionSpec& region);
Vec3 face_normal(int face);

Region region_of(const Vec3& q, const UniverseSpec& universe, const RegionSpec& region);

std::size_t occupancy(const SimState& state, const UniverseSpec& universe, const RegionSpec& region);

struct RegionCounts {
  std::size_t inside = 0;
  std::size_t delta = 0;
  std::size_t outer = 0;
};
RegionCounts count_regions(const SimState& state, const UniverseSpec& universe, const RegionSpec& region);

enum class Direction : std::uint8_t { In, Out };

struct CrossingEvent {
  std::size_t particle = 0;
  Direction direction = Direction::In;
  int face = 0;
  double time = 0.0;  // offset within the step, in (0, dt]
};

// Boundary crossings of Omega between two consecutive states. The path within
// the step is the constant-acceleration arc fixed by the initial momentum and
// the net displacement, which is exact for a velocity-Verlet drift. Events
// are ordered by time; an Out followed by an In is reported when the arc
// leaves and re-enters within one step.
std::vector<CrossingEvent> crossing_events(const SimState& before, const SimState& after, double dt,
                                           const UniverseSpec& universe, const RegionSpec& region);

}  // namespace olv

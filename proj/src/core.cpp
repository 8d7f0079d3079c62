#include "olv/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "olv/error.hpp"

namespace olv {

double UniverseSpec::min_length() const {
  return std::min({box_lengths.x, box_lengths.y, box_lengths.z});
}

Vec3 UniverseSpec::wrap(Vec3 q) const {
  for (int k = 0; k < 3; ++k) {
    if (!periodic[k]) continue;
    const double L = box_lengths[k];
    q[k] -= L * std::floor(q[k] / L);
    if (q[k] >= L) q[k] = 0.0;  // -tiny wraps to L after rounding
  }
  return q;
}

Vec3 UniverseSpec::minimum_image(Vec3 d) const {
  for (int k = 0; k < 3; ++k) {
    if (!periodic[k]) continue;
    const double L = box_lengths[k];
    d[k] -= L * std::nearbyint(d[k] / L);
  }
  return d;
}

double RegionSpec::volume() const {
  const Vec3 e = extent();
  return e.x * e.y * e.z;
}

double RegionSpec::surface_area() const {
  const Vec3 e = extent();
  return 2.0 * (e.x * e.y + e.y * e.z + e.z * e.x);
}

bool RegionSpec::contains(const Vec3& q) const {
  for (int k = 0; k < 3; ++k)
    if (!(q[k] >= omega_lo[k] && q[k] < omega_hi[k])) return false;
  return true;
}

std::string_view to_string(Region r) noexcept {
  switch (r) {
    case Region::InsideOmega: return "InsideOmega";
    case Region::DeltaLayer: return "DeltaLayer";
    case Region::Outer: return "Outer";
  }
  return "?";
}

void validate(const UniverseSpec& universe) {
  for (int k = 0; k < 3; ++k)
    if (!(universe.box_lengths[k] > 0.0) || !std::isfinite(universe.box_lengths[k]))
      throw Error(ErrorCode::ConfigInvalid, "universe box lengths must be positive and finite");
  if (!(universe.mass > 0.0)) throw Error(ErrorCode::ConfigInvalid, "particle mass must be positive");
  if (!(universe.temperature > 0.0)) throw Error(ErrorCode::ConfigInvalid, "temperature must be positive");
}

void validate(const UniverseSpec& universe, const RegionSpec& region) {
  validate(universe);
  for (int k = 0; k < 3; ++k) {
    if (!(region.omega_lo[k] < region.omega_hi[k])) {
      std::ostringstream os;
      os << "omega_lo must be below omega_hi on axis " << k;
      throw Error(ErrorCode::ConfigInvalid, os.str());
    }
    if (!(region.omega_lo[k] > 0.0 && region.omega_hi[k] < universe.box_lengths[k])) {
      std::ostringstream os;
      os << "Omega must lie strictly inside the universe on axis " << k;
      throw Error(ErrorCode::ConfigInvalid, os.str());
    }
  }
  if (!(region.delta_thickness >= 0.0) || !std::isfinite(region.delta_thickness))
    throw Error(ErrorCode::ConfigInvalid, "delta thickness must be non-negative");
}

double distance_to_omega(const Vec3& q, const UniverseSpec& universe, const RegionSpec& region) {
  double d2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    double gap;
    if (universe.periodic[k]) {
      const double center = 0.5 * (region.omega_lo[k] + region.omega_hi[k]);
      const double half = 0.5 * (region.omega_hi[k] - region.omega_lo[k]);
      const double L = universe.box_lengths[k];
      double dq = q[k] - center;
      dq -= L * std::nearbyint(dq / L);
      gap = std::max(std::abs(dq) - half, 0.0);
    } else {
      gap = std::max({region.omega_lo[k] - q[k], q[k] - region.omega_hi[k], 0.0});
    }
    d2 += gap * gap;
  }
  return std::sqrt(d2);
}

Vec3 face_normal(int face) {
  Vec3 n;
  n[face / 2] = (face % 2 == 0) ? -1.0 : 1.0;
  return n;
}

FaceDistance nearest_face(const Vec3& q, const RegionSpec& region) {
  FaceDistance best{std::abs(q.x - region.omega_lo.x), 0, face_normal(0)};
  for (int k = 0; k < 3; ++k) {
    const double lo = q[k] - region.omega_lo[k];
    const double hi = region.omega_hi[k] - q[k];
    if (lo < best.distance) best = {lo, 2 * k, face_normal(2 * k)};
    if (hi < best.distance) best = {hi, 2 * k + 1, face_normal(2 * k + 1)};
  }
  return best;
}

Region region_of(const Vec3& q, const UniverseSpec& universe, const RegionSpec& region) {
  if (region.contains(q)) return Region::InsideOmega;
  if (region.delta_thickness > 0.0 && distance_to_omega(q, universe, region) <= region.delta_thickness)
    return Region::DeltaLayer;
  return Region::Outer;
}

std::size_t occupancy(const SimState& state, const UniverseSpec& universe, const RegionSpec& region) {
  (void)universe;
  std::size_t n = 0;
  for (const auto& pp : state.particles) n += region.contains(pp.q) ? 1 : 0;
  return n;
}

RegionCounts count_regions(const SimState& state, const UniverseSpec& universe, const RegionSpec& region) {
  RegionCounts c;
  for (const auto& pp : state.particles) {
    switch (region_of(pp.q, universe, region)) {
      case Region::InsideOmega: ++c.inside; break;
      case Region::DeltaLayer: ++c.delta; break;
      case Region::Outer: ++c.outer; break;
    }
  }
  return c;
}

namespace {

struct Candidate {
  double t;
  int face;
};

// Roots of 0.5*a*t^2 + v*t + c0 = 0 inside [0, dt].
void plane_roots(double c0, double v, double a, double dt, int face, std::vector<Candidate>& out) {
  auto push = [&](double t) {
    if (t >= 0.0 && t <= dt) out.push_back({t, face});
  };
  const double A = 0.5 * a;
  // Treat the arc as linear when curvature cannot move the point by more than
  // a rounding error over the step.
  if (std::abs(A) * dt * dt <= 1e-14 * (std::abs(v) * dt + std::abs(c0) + 1e-300)) {
    if (v != 0.0) push(-c0 / v);
    return;
  }
  const double disc = v * v - 4.0 * A * c0;
  if (disc < 0.0) return;
  const double s = std::sqrt(disc);
  // Numerically stable pair of roots.
  const double qq = -0.5 * (v + std::copysign(s, v));
  if (qq != 0.0) {
    push(qq / A);
    push(c0 / qq);
  } else {
    push(0.0);
  }
}

}  // namespace

std::vector<CrossingEvent> crossing_events(const SimState& before, const SimState& after, double dt,
                                           const UniverseSpec& universe, const RegionSpec& region) {
  if (before.particles.size() != after.particles.size())
    throw Error(ErrorCode::InconsistentLog, "crossing_events: particle count changed between states");
  if (!(dt > 0.0)) throw Error(ErrorCode::ConfigInvalid, "crossing_events: dt must be positive");

  const double half_min = 0.5 * universe.min_length();
  std::vector<CrossingEvent> events;
  std::vector<Candidate> cands;

  for (std::size_t i = 0; i < before.particles.size(); ++i) {
    const PhasePoint& a = before.particles[i];
    const PhasePoint& b = after.particles[i];
    const Vec3 v0 = a.p * (1.0 / universe.mass);
    const Vec3 predicted = (a.p + b.p) * (0.5 * dt / universe.mass);
    if (norm(predicted) >= half_min)
      throw Error(ErrorCode::DisplacementTooLarge, "particle displacement exceeds half the box; reduce dt");
    const Vec3 disp = universe.minimum_image(b.q - a.q);
    if (norm(disp) >= half_min)
      throw Error(ErrorCode::DisplacementTooLarge, "particle displacement exceeds half the box; reduce dt");
    const Vec3 acc = (disp - v0 * dt) * (2.0 / (dt * dt));

    const bool in0 = region.contains(a.q);
    const bool in1 = region.contains(b.q);

    cands.clear();
    for (int k = 0; k < 3; ++k) {
      // Skip axes the arc cannot bring to any face plane.
      const double span_lo = std::min(a.q[k], a.q[k] + disp[k]);
      const double span_hi = std::max(a.q[k], a.q[k] + disp[k]);
      const double reach = std::abs(v0[k]) * dt + 0.5 * std::abs(acc[k]) * dt * dt;
      const int images = universe.periodic[k] ? 1 : 0;
      for (int m = -images; m <= images; ++m) {
        const double shift = m * universe.box_lengths[k];
        const double planes[2] = {region.omega_lo[k] + shift, region.omega_hi[k] + shift};
        for (int side = 0; side < 2; ++side) {
          const double c = planes[side];
          if (c < span_lo - reach || c > span_hi + reach) continue;
          plane_roots(a.q[k] - c, v0[k], acc[k], dt, 2 * k + side, cands);
        }
      }
    }
    if (cands.empty()) {
      // Only rounding at a face can flip membership without a root.
      if (in0 != in1) {
        const int face = nearest_face(in0 ? a.q : b.q, region).face;
        events.push_back({i, in1 ? Direction::In : Direction::Out, face, dt});
      }
      continue;
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) { return x.t < y.t; });

    auto inside_at = [&](double t) {
      const Vec3 q = a.q + v0 * t + acc * (0.5 * t * t);
      return region.contains(universe.wrap(q));
    };

    bool state = in0;
    for (std::size_t c = 0; c < cands.size(); ++c) {
      const bool next = (c + 1 < cands.size()) ? inside_at(0.5 * (cands[c].t + cands[c + 1].t)) : in1;
      if (next != state) {
        events.push_back({i, next ? Direction::In : Direction::Out, cands[c].face, cands[c].t});
        state = next;
      }
    }
  }

  std::stable_sort(events.begin(), events.end(),
                   [](const CrossingEvent& x, const CrossingEvent& y) { return x.time < y.time; });
  return events;
}

}  // namespace olv

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace mrtamp {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend Vec3 operator*(double s, Vec3 a) { return a * s; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

// Poses and waypoints are plain positions in the point-effector abstraction.
using Pose = Vec3;

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline double distance(Vec3 a, Vec3 b) { return norm(a - b); }
inline double distance_xy(Vec3 a, Vec3 b) { return std::hypot(a.x - b.x, a.y - b.y); }
inline Vec3 lerp(Vec3 a, Vec3 b, double t) { return a + (b - a) * t; }

inline bool is_finite(Vec3 p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

inline double point_segment_distance(Vec3 p, Vec3 a, Vec3 b) {
  const Vec3 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 <= 0.0) return distance(p, a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + ab * t);
}

inline double point_segment_distance_xy(Vec3 p, Vec3 a, Vec3 b) {
  p.z = a.z = b.z = 0.0;
  return point_segment_distance(p, a, b);
}

// Closest distance between segments p1q1 and p2q2 (Ericson, Real-Time Collision Detection 5.1.9).
inline double segment_segment_distance(Vec3 p1, Vec3 q1, Vec3 p2, Vec3 q2) {
  constexpr double kEps = 1e-12;
  const Vec3 d1 = q1 - p1;
  const Vec3 d2 = q2 - p2;
  const Vec3 r = p1 - p2;
  const double a = dot(d1, d1);
  const double e = dot(d2, d2);
  const double f = dot(d2, r);
  double s = 0.0;
  double t = 0.0;
  if (a <= kEps && e <= kEps) return distance(p1, p2);
  if (a <= kEps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = dot(d1, r);
    if (e <= kEps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = dot(d1, d2);
      const double denom = a * e - b * b;
      s = denom > kEps ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return distance(p1 + d1 * s, p2 + d2 * t);
}

// Vertical cylinder standing on the floor: axis at (x, y), extent z in (-inf, height].
struct Cylinder {
  double x = 0.0;
  double y = 0.0;
  double radius = 0.0;
  double height = 0.0;
};

// Signed distance to the cylinder surface; negative inside (penetration depth).
inline double signed_distance(const Cylinder& c, Vec3 p) {
  const double radial = std::hypot(p.x - c.x, p.y - c.y) - c.radius;
  const double vertical = p.z - c.height;
  if (radial <= 0.0 && vertical <= 0.0) return std::max(radial, vertical);
  if (vertical <= 0.0) return radial;
  if (radial <= 0.0) return vertical;
  return std::hypot(radial, vertical);
}

// Minimum signed distance over segment ab. The signed distance of a convex set is
// convex, so its restriction to a segment is unimodal and golden-section search is exact
// up to the iteration tolerance.
inline double segment_signed_distance(const Cylinder& c, Vec3 a, Vec3 b) {
  constexpr double kInvPhi = 0.6180339887498949;
  auto f = [&](double t) { return signed_distance(c, lerp(a, b, t)); };
  double lo = 0.0;
  double hi = 1.0;
  double m1 = hi - kInvPhi * (hi - lo);
  double m2 = lo + kInvPhi * (hi - lo);
  double f1 = f(m1);
  double f2 = f(m2);
  for (int i = 0; i < 40; ++i) {
    if (f1 <= f2) {
      hi = m2;
      m2 = m1;
      f2 = f1;
      m1 = hi - kInvPhi * (hi - lo);
      f1 = f(m1);
    } else {
      lo = m1;
      m1 = m2;
      f1 = f2;
      m2 = lo + kInvPhi * (hi - lo);
      f2 = f(m2);
    }
  }
  return std::min({f(0.0), f(1.0), f1, f2});
}

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

}  // namespace mrtamp

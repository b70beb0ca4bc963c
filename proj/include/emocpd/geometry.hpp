#pragma once

#include <array>
#include <cmath>

#include "emocpd/errors.hpp"

namespace emocpd::geom {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm2(const Vec3& a) { return dot(a, a); }
inline double norm(const Vec3& a) { return std::sqrt(norm2(a)); }
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }

inline Vec3 normalized(const Vec3& a) {
  double n = norm(a);
  if (n == 0.0) throw Error("cannot normalize zero vector");
  return a / n;
}

inline bool finite(const Vec3& a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

// Row-major 3x3 matrix, enough for the rigid-motion tests.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  Vec3 apply(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  static Mat3 from_columns(const Vec3& c0, const Vec3& c1, const Vec3& c2) {
    Mat3 r;
    r.m = {c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z};
    return r;
  }
};

constexpr double kPi = 3.14159265358979323846;
inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

// Angle a-vertex-c in degrees.
inline double angle_deg(const Vec3& a, const Vec3& vertex, const Vec3& c) {
  Vec3 u = normalized(a - vertex);
  Vec3 v = normalized(c - vertex);
  double d = dot(u, v);
  if (d > 1.0) d = 1.0;
  if (d < -1.0) d = -1.0;
  return rad_to_deg(std::acos(d));
}

// Signed dihedral p1-p2-p3-p4 in degrees (IUPAC sign convention).
inline double dihedral_deg(const Vec3& p1, const Vec3& p2, const Vec3& p3, const Vec3& p4) {
  Vec3 b1 = p2 - p1;
  Vec3 b2 = p3 - p2;
  Vec3 b3 = p4 - p3;
  Vec3 n1 = cross(b1, b2);
  Vec3 n2 = cross(b2, b3);
  double x = dot(n1, n2);
  double y = dot(cross(n1, n2), normalized(b2));
  return rad_to_deg(std::atan2(y, x));
}

// Places atom D given A-B-C, bond |C-D|, angle B-C-D and dihedral A-B-C-D.
inline Vec3 place_from_internal(const Vec3& a, const Vec3& b, const Vec3& c, double bond,
                                double theta_deg, double tau_deg) {
  Vec3 bc = c - b;
  Vec3 ab = b - a;
  Vec3 n = cross(ab, bc);
  if (norm(n) < 1e-6) throw Error("collinear reference atoms in internal-coordinate placement");
  Vec3 e1 = normalized(bc);
  Vec3 e3 = normalized(n);
  Vec3 e2 = cross(e3, e1);
  double theta = deg_to_rad(theta_deg);
  double tau = deg_to_rad(tau_deg);
  Vec3 d = e1 * (-bond * std::cos(theta)) + e2 * (bond * std::sin(theta) * std::cos(tau)) +
           e3 * (bond * std::sin(theta) * std::sin(tau));
  return c + d;
}

}  // namespace emocpd::geom

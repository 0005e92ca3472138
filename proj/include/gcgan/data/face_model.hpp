#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

// Parametric face geometry shared by the renderer and the analytic landmark model.
// Coordinates are pixels in a 64x64 canvas, x to the right, y down, face midline x = 32.
// Every face is mirror-symmetric: features are described on the image-left half and
// mirrored, so geometry is a function of (|x - 32|, y).

namespace gcgan::data {

constexpr int kImageSize = 64;
constexpr int kNumLandmarks = 68;
constexpr int kLandmarkDims = 2 * kNumLandmarks;
constexpr double kMidline = kImageSize / 2.0;

using LandmarkVector = std::array<float, kLandmarkDims>;

struct ParamError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IdentityParams {
  double face_width = 0.5;
  double face_height = 0.5;
  double eye_spacing = 0.5;
  double eye_size = 0.5;
  double nose_length = 0.5;
  double mouth_width = 0.5;
  double brow_thickness = 0.5;
  double base_hue = 0.5;

  std::array<double, 8> as_array() const {
    return {face_width, face_height, eye_spacing, eye_size, nose_length, mouth_width, brow_thickness, base_hue};
  }
  static IdentityParams from_array(const std::array<double, 8>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7]};
  }

  void validate() const {
    for (double v : as_array()) {
      if (!(v >= 0.0 && v <= 1.0)) throw ParamError("identity parameter outside [0,1]: " + std::to_string(v));
    }
  }
  bool operator==(const IdentityParams&) const = default;
};

struct ExpressionParams {
  double mouth_openness = 0.0;   // [0,1]
  double mouth_curvature = 0.0;  // [-1,1], positive raises the corners
  double eye_openness = 0.6;     // [0,1]
  double brow_raise = 0.0;       // [-1,1]

  std::array<double, 4> as_array() const { return {mouth_openness, mouth_curvature, eye_openness, brow_raise}; }
  static ExpressionParams from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }

  void validate() const {
    auto check = [](double v, double lo, double hi, const char* what) {
      if (!(v >= lo && v <= hi)) throw ParamError(std::string(what) + " out of range: " + std::to_string(v));
    };
    check(mouth_openness, 0, 1, "mouth openness");
    check(mouth_curvature, -1, 1, "mouth curvature");
    check(eye_openness, 0, 1, "eye openness");
    check(brow_raise, -1, 1, "brow raise");
  }

  /// Clamps every component into its valid range.
  ExpressionParams clamped() const {
    auto c = [](double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); };
    return {c(mouth_openness, 0, 1), c(mouth_curvature, -1, 1), c(eye_openness, 0, 1), c(brow_raise, -1, 1)};
  }
  bool operator==(const ExpressionParams&) const = default;
};

struct Point {
  double x = 0, y = 0;
};

/// Derived shape quantities. Horizontal positions are distances from the midline.
struct FaceGeometry {
  double face_cy, face_a, face_b;
  double eye_y, eye_dx, eye_hw, eye_up, eye_lo, pupil_r;
  double brow_y, brow_outer, brow_inner, brow_arch, brow_thickness;
  double nose_top, nose_tip, nose_hw;
  double mouth_y, mouth_hw, mouth_inner_hw, mouth_corner_y;
  double upper_outer_y, upper_inner_y, lower_inner_y, lower_outer_y;
  double hue;

  // Lid offset at normalized eye position s in [-1,1]; zero at the corners.
  double upper_lid(double s) const { return eye_y - eye_up * (1 - s * s); }
  double lower_lid(double s) const { return eye_y + eye_lo * (1 - s * s); }
  double brow_curve(double s) const { return brow_y - brow_arch * (1 - s * s); }
  double brow_u(double s) const { return brow_outer + (brow_inner - brow_outer) * (s + 1) / 2; }
  // Lip curves: parabola from the corners (s = +-1) to the centre value at s = 0.
  double lip(double center, double s) const { return center + (mouth_corner_y - center) * s * s; }
};

inline FaceGeometry face_geometry(const IdentityParams& id, const ExpressionParams& ex) {
  id.validate();
  ex.validate();
  FaceGeometry g{};
  g.face_cy = 33.0;
  g.face_a = 18.0 + 5.0 * id.face_width;
  g.face_b = 22.0 + 5.0 * id.face_height;

  g.eye_y = g.face_cy - 0.26 * g.face_b;
  g.eye_dx = 7.0 + 3.0 * id.eye_spacing;
  g.eye_hw = 2.5 + 1.5 * id.eye_size;
  g.eye_up = ex.eye_openness * (1.2 + 1.3 * id.eye_size);
  g.eye_lo = ex.eye_openness * (0.7 + 0.6 * id.eye_size);
  g.pupil_r = 0.9 + 0.5 * id.eye_size;

  g.brow_y = g.eye_y - 5.0 - 1.8 * ex.brow_raise;
  g.brow_outer = g.eye_dx + g.eye_hw + 0.8;
  g.brow_inner = g.eye_dx - g.eye_hw - 0.3;
  g.brow_arch = 1.0;
  g.brow_thickness = 0.9 + 1.3 * id.brow_thickness;

  g.nose_top = g.eye_y;
  g.nose_tip = g.eye_y + 7.0 + 4.0 * id.nose_length;
  g.nose_hw = 2.5 + 1.0 * id.nose_length;

  g.mouth_y = g.nose_tip + 1.7 + 5.5;
  g.mouth_hw = 5.0 + 3.0 * id.mouth_width + 0.6 * ex.mouth_curvature;
  g.mouth_inner_hw = g.mouth_hw - 0.8;
  g.mouth_corner_y = g.mouth_y - 2.2 * ex.mouth_curvature;
  const double gap = 6.0 * ex.mouth_openness;
  g.upper_inner_y = g.mouth_y - gap / 2;
  g.upper_outer_y = g.upper_inner_y - 1.6;
  g.lower_inner_y = g.mouth_y + gap / 2;
  g.lower_outer_y = g.lower_inner_y + 2.0;

  g.hue = id.base_hue;
  return g;
}

// iBUG-68 mirror pairs (1-based): index i maps to the landmark on the other side.
inline constexpr std::array<int, kNumLandmarks> kMirror = [] {
  std::array<int, kNumLandmarks> m{};
  for (int i = 0; i < kNumLandmarks; ++i) m[i] = i + 1;
  auto pair = [&m](int a, int b) {
    m[a - 1] = b;
    m[b - 1] = a;
  };
  for (int i = 1; i <= 8; ++i) pair(i, 18 - i);                              // jaw
  for (int i = 18; i <= 22; ++i) pair(i, 45 - i);                            // brows
  pair(32, 36);                                                              // nostrils
  pair(33, 35);
  pair(37, 46), pair(38, 45), pair(39, 44), pair(40, 43), pair(41, 48), pair(42, 47);  // eyes
  pair(49, 55), pair(50, 54), pair(51, 53), pair(60, 56), pair(59, 57);      // outer lip
  pair(61, 65), pair(62, 64), pair(68, 66);                                  // inner lip
  return m;
}();

/// The 68 landmark points in pixel coordinates, iBUG ordering (index 0 is point 1).
inline std::array<Point, kNumLandmarks> landmark_points(const FaceGeometry& g) {
  std::array<Point, kNumLandmarks> p{};
  auto left = [](double u) { return kMidline - u; };
  auto set = [&p](int one_based, double x, double y) { p[one_based - 1] = {x, y}; };

  // Jaw 1..9 along the lower half of the face ellipse, image-left down to the chin.
  for (int i = 0; i < 8; ++i) {
    const double theta = M_PI - i * M_PI / 16.0;
    set(i + 1, kMidline + g.face_a * std::cos(theta), g.face_cy + g.face_b * std::sin(theta));
  }
  set(9, kMidline, g.face_cy + g.face_b);

  // Image-left brow 18..22 from outer to inner end.
  for (int i = 0; i < 5; ++i) {
    const double s = -1.0 + 0.5 * i;
    set(18 + i, left(g.brow_u(s)), g.brow_curve(s));
  }

  // Nose bridge 28..31, base 32..36.
  for (int i = 0; i < 4; ++i) set(28 + i, kMidline, g.nose_top + (g.nose_tip - g.nose_top) * i / 3.0);
  set(32, left(g.nose_hw), g.nose_tip + 0.6);
  set(33, left(g.nose_hw / 2), g.nose_tip + 1.4);
  set(34, kMidline, g.nose_tip + 1.7);

  // Image-left eye 37..42: outer corner, two upper-lid points, inner corner, two lower.
  const double thirds[2] = {-1.0 / 3.0, 1.0 / 3.0};
  set(37, left(g.eye_dx + g.eye_hw), g.eye_y);
  set(38, left(g.eye_dx - thirds[0] * g.eye_hw), g.upper_lid(thirds[0]));
  set(39, left(g.eye_dx - thirds[1] * g.eye_hw), g.upper_lid(thirds[1]));
  set(40, left(g.eye_dx - g.eye_hw), g.eye_y);
  set(41, left(g.eye_dx - thirds[1] * g.eye_hw), g.lower_lid(thirds[1]));
  set(42, left(g.eye_dx - thirds[0] * g.eye_hw), g.lower_lid(thirds[0]));

  // Outer lip: 49 left corner, 50..52 upper, 58..60 lower (left half).
  set(49, left(g.mouth_hw), g.mouth_corner_y);
  set(50, left(g.mouth_hw * 2 / 3), g.lip(g.upper_outer_y, 2.0 / 3.0));
  set(51, left(g.mouth_hw / 3), g.lip(g.upper_outer_y, 1.0 / 3.0));
  set(52, kMidline, g.upper_outer_y);
  set(58, kMidline, g.lower_outer_y);
  set(59, left(g.mouth_hw / 3), g.lip(g.lower_outer_y, 1.0 / 3.0));
  set(60, left(g.mouth_hw * 2 / 3), g.lip(g.lower_outer_y, 2.0 / 3.0));

  // Inner lip: 61 left corner, 62..63 upper, 67..68 lower.
  set(61, left(g.mouth_inner_hw), g.mouth_corner_y);
  set(62, left(g.mouth_inner_hw / 2), g.lip(g.upper_inner_y, 0.5));
  set(63, kMidline, g.upper_inner_y);
  set(67, kMidline, g.lower_inner_y);
  set(68, left(g.mouth_inner_hw / 2), g.lip(g.lower_inner_y, 0.5));

  // Mirror the image-left half onto the right.
  static constexpr int kLeftHalf[] = {1,  2,  3,  4,  5,  6,  7,  8,  18, 19, 20, 21, 22, 32, 33, 37, 38,
                                      39, 40, 41, 42, 49, 50, 51, 59, 60, 61, 62, 68};
  for (int one_based : kLeftHalf) {
    const Point& src = p[one_based - 1];
    p[kMirror[one_based - 1] - 1] = {2 * kMidline - src.x, src.y};
  }
  return p;
}

inline float normalize_coordinate(double pixel, double extent = kImageSize) {
  return static_cast<float>(2.0 * pixel / extent - 1.0);
}

inline double denormalize_coordinate(float v, double extent = kImageSize) { return (v + 1.0) * extent / 2.0; }

/// 136 normalized coordinates x1,y1,...,x68,y68 in [-1,1].
inline LandmarkVector landmarks_of(const IdentityParams& id, const ExpressionParams& ex) {
  const auto pts = landmark_points(face_geometry(id, ex));
  LandmarkVector out{};
  for (int i = 0; i < kNumLandmarks; ++i) {
    out[2 * i] = normalize_coordinate(pts[i].x);
    out[2 * i + 1] = normalize_coordinate(pts[i].y);
  }
  return out;
}

}  // namespace gcgan::data

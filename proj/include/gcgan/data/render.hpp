#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "gcgan/data/face_model.hpp"
#include "gcgan/nn/tensor.hpp"

namespace gcgan::data {

/// Channel-first image (3, 64, 64) with values in [-1,1].
using Image = nn::Tensor<float>;

namespace detail {

using Rgb = std::array<double, 3>;

struct Polyline {
  std::vector<Point> pts;  // (u, y) with u = |x - 32|
  double lo_u, hi_u, lo_y, hi_y;

  void finish(double pad) {
    lo_u = hi_u = pts.front().x;
    lo_y = hi_y = pts.front().y;
    for (const auto& p : pts) {
      lo_u = std::min(lo_u, p.x), hi_u = std::max(hi_u, p.x);
      lo_y = std::min(lo_y, p.y), hi_y = std::max(hi_y, p.y);
    }
    lo_u -= pad, hi_u += pad, lo_y -= pad, hi_y += pad;
  }

  bool near(double u, double y, double radius) const {
    if (u < lo_u || u > hi_u || y < lo_y || y > hi_y) return false;
    const double r2 = radius * radius;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const Point& a = pts[i];
      const Point& b = pts[i + 1];
      const double dx = b.x - a.x, dy = b.y - a.y;
      const double len2 = dx * dx + dy * dy;
      double t = len2 > 0 ? ((u - a.x) * dx + (y - a.y) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = u - (a.x + t * dx), ey = y - (a.y + t * dy);
      if (ex * ex + ey * ey <= r2) return true;
    }
    return false;
  }
};

template <typename F>
Polyline sample_curve(F&& f, double s0, double s1, int segments, double pad) {
  Polyline p;
  for (int i = 0; i <= segments; ++i) p.pts.push_back(f(s0 + (s1 - s0) * i / segments));
  p.finish(pad);
  return p;
}

constexpr double kStroke = 0.45;      // half width of nose strokes
constexpr double kFineStroke = 0.35;  // half width of lid and lip lines

/// Evaluates the layered face scene at one sample point.
class Scene {
 public:
  explicit Scene(const FaceGeometry& g) : g_(g) {
    const double h = g.hue;
    skin_ = {0.93 - 0.40 * h, 0.76 - 0.36 * h, 0.62 - 0.30 * h};
    brow_ = {0.30 - 0.15 * h, 0.20 - 0.12 * h, 0.14 - 0.08 * h};
    lips_ = {0.78 - 0.20 * h, 0.36 - 0.10 * h, 0.38 - 0.10 * h};
    nose_ = {skin_[0] * 0.6, skin_[1] * 0.6, skin_[2] * 0.6};

    brow_line_ = sample_curve([&](double s) { return Point{g.brow_u(s), g.brow_curve(s)}; }, -1, 1, 24,
                              g.brow_thickness);
    upper_lid_ = sample_curve([&](double s) { return Point{g.eye_dx - s * g.eye_hw, g.upper_lid(s)}; }, -1, 1, 24,
                              kFineStroke + 0.1);
    lower_lid_ = sample_curve([&](double s) { return Point{g.eye_dx - s * g.eye_hw, g.lower_lid(s)}; }, -1, 1, 24,
                              kFineStroke + 0.1);
    bridge_.pts = {{0, g.nose_top}, {0, g.nose_tip}};
    bridge_.finish(kStroke + 0.1);
    nostrils_.pts = {{g.nose_hw, g.nose_tip + 0.6}, {g.nose_hw / 2, g.nose_tip + 1.4}, {0, g.nose_tip + 1.7}};
    nostrils_.finish(kStroke + 0.1);
    upper_inner_ = sample_curve([&](double s) { return Point{s * g.mouth_inner_hw, g.lip(g.upper_inner_y, s)}; },
                                0, 1, 24, kFineStroke + 0.1);
    lower_inner_ = sample_curve([&](double s) { return Point{s * g.mouth_inner_hw, g.lip(g.lower_inner_y, s)}; },
                                0, 1, 24, kFineStroke + 0.1);
  }

  Rgb at(double x, double y) const {
    const double u = std::abs(x - kMidline);
    Rgb c = {0.25, 0.30, 0.35};
    const double fx = u / g_.face_a, fy = (y - g_.face_cy) / g_.face_b;
    if (fx * fx + fy * fy <= 1.0) c = skin_;

    if (brow_line_.near(u, y, g_.brow_thickness / 2)) c = brow_;

    const double du = u - g_.eye_dx;
    if (std::abs(du) <= g_.eye_hw) {
      const double s = du / g_.eye_hw;
      if (y >= g_.upper_lid(s) && y <= g_.lower_lid(s)) {
        c = {0.96, 0.96, 0.94};
        const double dy = y - g_.eye_y;
        if (du * du + dy * dy <= g_.pupil_r * g_.pupil_r) c = {0.12, 0.10, 0.10};
      }
    }
    if (upper_lid_.near(u, y, kFineStroke) || lower_lid_.near(u, y, kFineStroke)) c = {0.20, 0.12, 0.10};

    if (bridge_.near(u, y, kStroke) || nostrils_.near(u, y, kStroke)) c = nose_;

    if (u <= g_.mouth_hw) {
      const double s = u / g_.mouth_hw;
      const double top = g_.lip(g_.upper_outer_y, s), bottom = g_.lip(g_.lower_outer_y, s);
      if (y >= std::min(top, bottom) && y <= std::max(top, bottom)) c = lips_;
    }
    if (u <= g_.mouth_inner_hw) {
      const double s = u / g_.mouth_inner_hw;
      const double top = g_.lip(g_.upper_inner_y, s), bottom = g_.lip(g_.lower_inner_y, s);
      if (y >= std::min(top, bottom) && y <= std::max(top, bottom)) c = {0.25, 0.06, 0.08};
    }
    if (upper_inner_.near(u, y, kFineStroke) || lower_inner_.near(u, y, kFineStroke)) c = {0.35, 0.10, 0.12};
    return c;
  }

 private:
  FaceGeometry g_;
  Rgb skin_, brow_, lips_, nose_;
  Polyline brow_line_, upper_lid_, lower_lid_, bridge_, nostrils_, upper_inner_, lower_inner_;
};

}  // namespace detail

constexpr int kSupersample = 4;

/// Anti-aliased 64x64 RGB render, channel-first, values in [-1,1]. Uses 4x4 supersampling
/// with sample positions symmetric about the midline, so the render is mirror-symmetric.
inline Image render_face(const IdentityParams& id, const ExpressionParams& ex) {
  const detail::Scene scene(face_geometry(id, ex));
  constexpr int n = kImageSize;
  Image img(nn::Shape{3, n, n});
  const double inv = 1.0 / (kSupersample * kSupersample);
  for (int py = 0; py < n; ++py) {
    for (int px = 0; px < n; ++px) {
      double acc[3] = {0, 0, 0};
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const auto c = scene.at(px + (sx + 0.5) / kSupersample, py + (sy + 0.5) / kSupersample);
          for (int k = 0; k < 3; ++k) acc[k] += c[k];
        }
      }
      for (int k = 0; k < 3; ++k) img[(k * n + py) * n + px] = static_cast<float>(acc[k] * inv * 2.0 - 1.0);
    }
  }
  return img;
}

}  // namespace gcgan::data

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "siamnet/dataio.hpp"
#include "siamnet/errors.hpp"
#include "siamnet/rng.hpp"

namespace siamnet::data {
namespace {

using Color = std::array<double, 3>;

struct Appearance {
  Color hair, skin, torso, stripe, legs, shoes;
  std::size_t stripe_period;  // rows; 0 = plain torso
  bool vertical_split;        // jacket open: left/right torso halves differ
};

Color random_color(Rng& rng) {
  return {rng.uniform(20.0, 235.0), rng.uniform(20.0, 235.0), rng.uniform(20.0, 235.0)};
}

Appearance random_appearance(Rng& rng) {
  Appearance a;
  const double hair_level = rng.uniform(10.0, 120.0);
  a.hair = {hair_level, hair_level * 0.8, hair_level * 0.6};
  const double skin_level = rng.uniform(120.0, 230.0);
  a.skin = {skin_level, skin_level * 0.8, skin_level * 0.65};
  a.torso = random_color(rng);
  a.stripe = random_color(rng);
  a.legs = random_color(rng);
  const double shoe_level = rng.uniform(10.0, 90.0);
  a.shoes = {shoe_level, shoe_level, shoe_level};
  a.stripe_period = rng.below(3) == 0 ? 0 : 2 + rng.below(4);
  a.vertical_split = rng.below(4) == 0;
  return a;
}

Tensor render(const Appearance& a, const Geometry& g, Rng& rng, const Color& cast,
              double brightness, std::size_t max_shift, double noise_sigma) {
  const auto h = static_cast<long>(g.height), w = static_cast<long>(g.width);
  Tensor img({3, g.height, g.width});
  const Color bg = {rng.uniform(60.0, 200.0), rng.uniform(60.0, 200.0), rng.uniform(60.0, 200.0)};
  const long span = static_cast<long>(2 * max_shift + 1);
  const long dy = static_cast<long>(rng.below(static_cast<std::uint64_t>(span))) - static_cast<long>(max_shift);
  const long dx = static_cast<long>(rng.below(static_cast<std::uint64_t>(span))) - static_cast<long>(max_shift);

  const long head_end = h / 6, torso_end = (h * 11) / 20, legs_end = h - std::max(1L, h / 16);
  const long body_l = w / 5, body_r = w - w / 5;
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      const long by = y - dy, bx = x - dx;
      Color c = bg;
      const bool in_body = bx >= body_l && bx < body_r && by >= 0 && by < h;
      if (in_body) {
        if (by < head_end) {
          const bool hair = by < head_end / 2 + 1;
          const bool face = bx >= body_l + (body_r - body_l) / 4 && bx < body_r - (body_r - body_l) / 4;
          if (hair && face) c = a.hair;
          else if (face) c = a.skin;
        } else if (by < torso_end) {
          c = a.torso;
          if (a.stripe_period && ((by - head_end) / static_cast<long>(a.stripe_period)) % 2 == 1)
            c = a.stripe;
          if (a.vertical_split && bx >= (body_l + body_r) / 2) c = a.stripe;
        } else if (by < legs_end) {
          // Two legs with a gap in the middle.
          const long mid = (body_l + body_r) / 2;
          if (bx != mid) c = a.legs;
        } else {
          c = a.shoes;
        }
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = c[ch] * brightness * cast[ch] + noise_sigma * rng.normal();
        img.at(ch, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = std::clamp(v, 0.0, 255.0);
      }
    }
  }
  return img;
}

}  // namespace

std::vector<PersonImage> make_synthetic_dataset(const SyntheticOptions& options) {
  if (options.subjects < 2) throw UsageError("synthetic dataset needs >= 2 subjects");
  if (options.cameras < 1 || options.cameras > 26) throw UsageError("synthetic cameras must be 1..26");
  if (options.geometry.height < 16 || options.geometry.width < 8)
    throw UsageError("synthetic geometry too small (need >= 16x8)");

  Rng rng(options.seed);
  // Per-camera rendering conditions.
  std::vector<Color> casts(options.cameras);
  std::vector<double> brightness(options.cameras);
  for (std::size_t c = 0; c < options.cameras; ++c) {
    const double tint = options.illumination * 0.5;
    casts[c] = {1.0 + rng.uniform(-tint, tint), 1.0 + rng.uniform(-tint, tint),
                1.0 + rng.uniform(-tint, tint)};
    brightness[c] = 1.0 + rng.uniform(-options.illumination, options.illumination);
  }

  std::vector<PersonImage> images;
  images.reserve(options.subjects * options.cameras);
  for (std::size_t s = 0; s < options.subjects; ++s) {
    const Appearance look = random_appearance(rng);
    char id[16];
    std::snprintf(id, sizeof id, "s%03zu", s);
    for (std::size_t c = 0; c < options.cameras; ++c) {
      PersonImage img;
      img.subject_id = id;
      img.camera_id = std::string("cam") + static_cast<char>('A' + c);
      img.index = 0;
      img.pixels = render(look, options.geometry, rng, casts[c], brightness[c], options.max_shift,
                          options.noise_sigma);
      images.push_back(std::move(img));
    }
  }
  return images;
}

}  // namespace siamnet::data

#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <unistd.h>

#include "eyelive/model.hpp"

namespace eyelive::test {

// Sample looking `deg` degrees right of straight ahead, from 3D geometry.
inline GazeSample at_angle(std::int64_t t_us, double deg, double screen_x = 960, double screen_y = 540) {
  const double r = deg * std::numbers::pi / 180.0;
  GazeSample s;
  s.t_us = t_us;
  s.screen_x = screen_x;
  s.screen_y = screen_y;
  s.origin_3d = Vec3{0, 0, 0};
  s.pos_3d = Vec3{600.0 * std::sin(r), 0, 600.0 * std::cos(r)};
  return s;
}

// 300 Hz timestamps, as rounded by a real tracker clock.
inline std::int64_t t300(int k) { return std::llround(k * (1e6 / 300.0)); }

inline WordAoi word(int i, double x, double y, double w, double h, int para = 0, int ch = 0) {
  WordAoi a;
  a.word_index = i;
  a.char_index = ch;
  a.paragraph_id = para;
  a.text = "";
  a.box = {x, y, w, h};
  return a;
}

// Two words A x in [100,150], B x in [160,210] on one line.
inline LayoutManifest ab_manifest() {
  LayoutManifest m;
  m.url = "test://ab";
  m.page_text = "A B";
  m.words = {word(0, 100, 100, 50, 20), word(1, 160, 100, 50, 20)};
  m.words[0].text = "A";
  m.words[1].text = "B";
  m.words[1].char_index = 2;
  m.paragraphs = {{0, Rect{100, 100, 110, 20}}};
  return m;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("eyelive_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace eyelive::test

#include <gtest/gtest.h>

#include <random>

#include "eyelive/model.hpp"
#include "helpers.hpp"

using namespace eyelive;

TEST(ScreenToPage, IdentityTransform) {
  const auto p = screen_to_page({500, 300}, ViewportState{0, 0, 0, 0, 0, 1});
  EXPECT_EQ(p, (Point{500, 300}));
}

TEST(ScreenToPage, WindowOffsetAndScroll) {
  const auto p = screen_to_page({500, 300}, ViewportState{0, 100, 50, 0, 400, 1});
  EXPECT_EQ(p, (Point{400, 650}));
}

TEST(ScreenToPage, DevicePixelRatio) {
  const auto p = screen_to_page({400, 200}, ViewportState{0, 0, 0, 0, 0, 2});
  EXPECT_EQ(p, (Point{200, 100}));
}

TEST(ScreenToPage, RoundTripProperty) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coord(-5000, 5000), dpr(0.25, 4);
  for (int i = 0; i < 10000; ++i) {
    ViewportState v{0, coord(rng), coord(rng), coord(rng), coord(rng), dpr(rng)};
    Point p{coord(rng), coord(rng)};
    const auto back = page_to_screen(screen_to_page(p, v), v);
    ASSERT_NEAR(back.x, p.x, 1e-9);
    ASSERT_NEAR(back.y, p.y, 1e-9);
  }
}

TEST(Validate, AcceptsWellFormedManifest) { EXPECT_NO_THROW(validate(test::ab_manifest())); }

TEST(Validate, RejectsNonContiguousIndices) {
  auto m = test::ab_manifest();
  m.words[1].word_index = 5;
  EXPECT_THROW(validate(m), error);
}

TEST(Validate, RejectsUnknownParagraph) {
  auto m = test::ab_manifest();
  m.words[0].paragraph_id = 9;
  EXPECT_THROW(validate(m), error);
}

TEST(Validate, RejectsTextMismatch) {
  auto m = test::ab_manifest();
  m.words[1].char_index = 0;
  try {
    validate(m);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::manifest_invalid);
  }
}

TEST(Validate, CharIndexCountsCodePoints) {
  LayoutManifest m;
  m.page_text = "Grüße Welt";
  m.paragraphs = {{0, Rect{0, 0, 100, 20}}};
  m.words = {test::word(0, 0, 0, 45, 20), test::word(1, 54, 0, 36, 20, 0, 6)};
  m.words[0].text = "Grüße";
  m.words[1].text = "Welt";
  EXPECT_NO_THROW(validate(m));
}

TEST(Validate, RejectsNegativeBox) {
  auto m = test::ab_manifest();
  m.words[0].box.w = -1;
  EXPECT_THROW(validate(m), error);
}

TEST(FirstPassMode, ParsesBothModes) {
  EXPECT_EQ(parse_first_pass_mode("strict"), FirstPassMode::strict);
  EXPECT_EQ(parse_first_pass_mode("first_visit"), FirstPassMode::first_visit);
  EXPECT_THROW(parse_first_pass_mode("loose"), error);
}

#pragma once

// Word and paragraph hit-testing.
//
// Words are grouped into lines (same paragraph, vertically overlapping
// boxes). Inside a line the horizontal gap g between neighbours is split:
// the left word takes g/3, the right word 2g/3. Extended intervals are
// half-open [left, right) so the shared boundary belongs to the right word;
// the last word of a line keeps its closed right edge. Vertically, a word
// is hit anywhere within its line box. Gaps between lines are not split.

#include <algorithm>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "eyelive/error.hpp"
#include "eyelive/model.hpp"

namespace eyelive {

class WordHitIndex {
 public:
  struct Line {
    double top = 0.0;
    double bottom = 0.0;
    int paragraph_id = 0;
    // Word indices sorted by x, with extended intervals.
    std::vector<int> words;
    std::vector<double> left;
    std::vector<double> right;
  };

  WordHitIndex() = default;

  explicit WordHitIndex(const LayoutManifest& layout) { build(layout); }

  const std::vector<Line>& lines() const { return lines_; }
  std::size_t word_count() const { return word_count_; }

  std::optional<int> lookup(Point p) const {
    // Lines are sorted by top; max_bottom_ is the running maximum of bottoms,
    // so every line with top <= p.y and bottom >= p.y sits in a suffix that
    // ends at the upper bound and starts after the last prefix below p.y.
    auto it = std::upper_bound(tops_.begin(), tops_.end(), p.y);
    auto hi = static_cast<std::ptrdiff_t>(it - tops_.begin());
    auto lo = static_cast<std::ptrdiff_t>(
        std::lower_bound(max_bottom_.begin(), max_bottom_.begin() + hi, p.y) - max_bottom_.begin());
    std::optional<int> best;
    int best_line = -1;
    for (auto i = lo; i < hi; ++i) {
      const Line& ln = lines_[static_cast<std::size_t>(i)];
      if (p.y < ln.top || p.y > ln.bottom) continue;
      auto hit = lookup_in_line(ln, p.x);
      // Overlapping lines from different paragraphs: the earliest line in
      // document order wins.
      if (hit && (!best || order_[static_cast<std::size_t>(i)] < best_line)) {
        best = hit;
        best_line = order_[static_cast<std::size_t>(i)];
      }
    }
    return best;
  }

 private:
  static std::optional<int> lookup_in_line(const Line& ln, double x) {
    const std::size_t n = ln.words.size();
    if (x < ln.left.front() || x > ln.right.back()) return std::nullopt;
    // First word whose extended right edge is beyond x.
    auto it = std::upper_bound(ln.right.begin(), ln.right.end(), x);
    std::size_t k = it == ln.right.end() ? n - 1 : static_cast<std::size_t>(it - ln.right.begin());
    if (x < ln.left[k]) return std::nullopt;
    return ln.words[k];
  }

  void build(const LayoutManifest& layout) {
    word_count_ = layout.words.size();
    const auto& words = layout.words;

    // Group per paragraph, then by vertical overlap in top order.
    std::map<int, std::vector<int>> by_para;
    for (const auto& w : words) by_para[w.paragraph_id].push_back(w.word_index);

    std::vector<std::pair<int, Line>> built;  // (first word index, line)
    for (auto& [pid, idx] : by_para) {
      std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return words[static_cast<std::size_t>(a)].box.top() < words[static_cast<std::size_t>(b)].box.top();
      });
      std::vector<Line> para_lines;
      for (int wi : idx) {
        const Rect& b = words[static_cast<std::size_t>(wi)].box;
        if (!para_lines.empty() && b.top() <= para_lines.back().bottom) {
          Line& ln = para_lines.back();
          ln.bottom = std::max(ln.bottom, b.bottom());
          ln.words.push_back(wi);
        } else {
          Line ln;
          ln.top = b.top();
          ln.bottom = b.bottom();
          ln.paragraph_id = pid;
          ln.words.push_back(wi);
          para_lines.push_back(std::move(ln));
        }
      }
      for (auto& ln : para_lines) {
        finish_line(ln, words);
        int first = *std::min_element(ln.words.begin(), ln.words.end());
        built.emplace_back(first, std::move(ln));
      }
    }

    std::sort(built.begin(), built.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::size_t> perm(built.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::stable_sort(perm.begin(), perm.end(),
                     [&](std::size_t a, std::size_t b) { return built[a].second.top < built[b].second.top; });
    for (std::size_t i : perm) {
      order_.push_back(static_cast<int>(i));
      lines_.push_back(std::move(built[i].second));
    }
    double running = -std::numeric_limits<double>::infinity();
    for (const auto& ln : lines_) {
      tops_.push_back(ln.top);
      running = std::max(running, ln.bottom);
      max_bottom_.push_back(running);
    }
  }

  static void finish_line(Line& ln, const std::vector<WordAoi>& words) {
    auto box = [&](int wi) -> const Rect& { return words[static_cast<std::size_t>(wi)].box; };
    std::stable_sort(ln.words.begin(), ln.words.end(), [&](int a, int b) { return box(a).left() < box(b).left(); });
    const std::size_t n = ln.words.size();
    ln.left.resize(n);
    ln.right.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      ln.left[k] = box(ln.words[k]).left();
      ln.right[k] = box(ln.words[k]).right();
    }
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double prev_right = box(ln.words[k]).right();
      const double next_left = box(ln.words[k + 1]).left();
      const double gap = next_left - prev_right;
      if (gap < 0) {
        throw error(errc::manifest_invalid, "words " + std::to_string(ln.words[k]) + " and " +
                                                std::to_string(ln.words[k + 1]) + " overlap on a line");
      }
      const double boundary = prev_right + gap / 3.0;
      ln.right[k] = boundary;
      ln.left[k + 1] = boundary;
    }
  }

  std::vector<Line> lines_;
  std::vector<int> order_;  // document order rank of each line
  std::vector<double> tops_;
  std::vector<double> max_bottom_;
  std::size_t word_count_ = 0;
};

// Holds the active manifest and its index; swapping in a new manifest is a
// single shared_ptr exchange so lookups always see one consistent layout.
class AoiMapper {
 public:
  struct Active {
    LayoutManifest manifest;
    WordHitIndex index;
  };

  void set_layout(LayoutManifest m) {
    validate(m);
    auto next = std::make_shared<Active>();
    next->index = WordHitIndex(m);
    next->manifest = std::move(m);
    std::atomic_store(&active_, std::shared_ptr<const Active>(std::move(next)));
  }

  std::shared_ptr<const Active> active() const { return std::atomic_load(&active_); }

  std::optional<int> map_point_to_word(Point p) const {
    auto a = active();
    if (!a) return std::nullopt;
    return a->index.lookup(p);
  }

  // Word first, then media. Unmapped fixations keep every AOI field empty.
  void map_fixation(Fixation& f) const {
    f.word_index.reset();
    f.media_id.reset();
    f.aoi_box.reset();
    auto a = active();
    if (!a || !f.centroid) return;
    if (auto w = a->index.lookup(*f.centroid)) {
      f.word_index = w;
      f.aoi_box = a->manifest.words[static_cast<std::size_t>(*w)].box;
      return;
    }
    for (const auto& m : a->manifest.media) {
      if (m.box.contains(*f.centroid)) {
        f.media_id = m.media_id;
        f.aoi_box = m.box;
        return;
      }
    }
  }

  // A saccade belongs to a paragraph iff both endpoints lie inside its box.
  void map_saccade(Saccade& s) {
    s.paragraph_id.reset();
    s.aoi_seq_index.reset();
    auto a = active();
    if (!a || !s.start_pt || !s.end_pt) return;
    for (const auto& p : a->manifest.paragraphs) {
      if (p.box.contains(*s.start_pt) && p.box.contains(*s.end_pt)) {
        s.paragraph_id = p.paragraph_id;
        s.aoi_seq_index = ++paragraph_counts_[p.paragraph_id];
        return;
      }
    }
  }

 private:
  std::shared_ptr<const Active> active_;
  std::map<int, int> paragraph_counts_;
};

}  // namespace eyelive

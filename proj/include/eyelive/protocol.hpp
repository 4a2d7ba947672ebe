#pragma once

// Wire protocol: one JSON object per WebSocket text frame, tagged by "type".

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "eyelive/error.hpp"
#include "eyelive/model.hpp"
#include "eyelive/serialize.hpp"

namespace eyelive::proto {

enum class Role { source, layout, viewer };
enum class TabState { visible, hidden, closed };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::source: return "source";
    case Role::layout: return "layout";
    case Role::viewer: return "viewer";
  }
  return "?";
}

inline const char* to_string(TabState s) {
  switch (s) {
    case TabState::visible: return "visible";
    case TabState::hidden: return "hidden";
    case TabState::closed: return "closed";
  }
  return "?";
}

// Client -> server.
struct Hello {
  Role role = Role::source;
  std::string session;  // empty: server assigns one
  std::string participant;
  friend bool operator==(const Hello&, const Hello&) = default;
};
struct Gaze {
  GazeSample sample;
  friend bool operator==(const Gaze&, const Gaze&) = default;
};
struct Layout {
  LayoutManifest manifest;
  friend bool operator==(const Layout&, const Layout&) = default;
};
struct Viewport {
  ViewportState state;
  friend bool operator==(const Viewport&, const Viewport&) = default;
};
struct Tab {
  TabState state = TabState::visible;
  friend bool operator==(const Tab&, const Tab&) = default;
};
struct End {
  friend bool operator==(const End&, const End&) = default;
};

// Server -> viewer.
struct Snapshot {
  std::optional<LayoutManifest> manifest;
  std::vector<WordMetrics> metrics;
  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};
struct FixationEnd {
  Fixation fixation;
  friend bool operator==(const FixationEnd&, const FixationEnd&) = default;
};
struct SaccadeEvent {
  Saccade saccade;
  friend bool operator==(const SaccadeEvent&, const SaccadeEvent&) = default;
};
struct MetricsUpdate {
  WordMetrics metrics;
  friend bool operator==(const MetricsUpdate&, const MetricsUpdate&) = default;
};
struct Error {
  std::string reason;
  friend bool operator==(const Error&, const Error&) = default;
};

// Well-formed message with a type tag this build does not handle.
struct Unknown {
  std::string type;
  friend bool operator==(const Unknown&, const Unknown&) = default;
};

using Message = std::variant<Hello, Gaze, Layout, Viewport, Tab, End, Snapshot, FixationEnd, SaccadeEvent,
                             MetricsUpdate, Error, Unknown>;

inline ojson to_json(const Message& msg) {
  return std::visit(
      [](const auto& m) -> ojson {
        using T = std::decay_t<decltype(m)>;
        ojson j = ojson::object();
        if constexpr (std::is_same_v<T, Hello>) {
          j["type"] = "hello";
          j["role"] = to_string(m.role);
          j["session"] = m.session;
          j["participant"] = m.participant;
        } else if constexpr (std::is_same_v<T, Gaze>) {
          j["type"] = "gaze";
          j.update(sample_fields(m.sample));
        } else if constexpr (std::is_same_v<T, Layout>) {
          j["type"] = "layout";
          j.update(manifest_fields(m.manifest));
        } else if constexpr (std::is_same_v<T, Viewport>) {
          j["type"] = "viewport";
          j.update(viewport_fields(m.state));
        } else if constexpr (std::is_same_v<T, Tab>) {
          j["type"] = "tabstate";
          j["state"] = to_string(m.state);
        } else if constexpr (std::is_same_v<T, End>) {
          j["type"] = "end";
        } else if constexpr (std::is_same_v<T, Snapshot>) {
          j["type"] = "snapshot";
          j["manifest"] = m.manifest ? manifest_fields(*m.manifest) : ojson(nullptr);
          ojson arr = ojson::array();
          for (const auto& wm : m.metrics) arr.push_back(metrics_fields(wm));
          j["metrics"] = std::move(arr);
        } else if constexpr (std::is_same_v<T, FixationEnd>) {
          j["type"] = "fixation_end";
          j.update(fixation_fields(m.fixation));
        } else if constexpr (std::is_same_v<T, SaccadeEvent>) {
          j["type"] = "saccade";
          j.update(saccade_fields(m.saccade));
        } else if constexpr (std::is_same_v<T, MetricsUpdate>) {
          j["type"] = "metrics_update";
          j["word_index"] = m.metrics.word_index;
          j["metrics"] = metrics_fields(m.metrics);
        } else if constexpr (std::is_same_v<T, Error>) {
          j["type"] = "error";
          j["reason"] = m.reason;
        } else {
          j["type"] = m.type;
        }
        return j;
      },
      msg);
}

inline std::string serialize(const Message& msg) { return to_json(msg).dump(); }

inline Role parse_role(std::string_view s) {
  if (s == "source") return Role::source;
  if (s == "layout") return Role::layout;
  if (s == "viewer") return Role::viewer;
  throw error(errc::parse_error, "unknown role '" + std::string(s) + "'");
}

inline TabState parse_tab_state(std::string_view s) {
  if (s == "visible") return TabState::visible;
  if (s == "hidden") return TabState::hidden;
  if (s == "closed") return TabState::closed;
  throw error(errc::parse_error, "unknown tab state '" + std::string(s) + "'");
}

inline Message from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw error(errc::parse_error, "message is not an object");
  const auto type = detail::get_as<std::string>(j, "type");
  if (type == "gaze") return Gaze{sample_from(j)};
  if (type == "viewport") return Viewport{viewport_from(j)};
  if (type == "layout") return Layout{manifest_from(j)};
  if (type == "hello") {
    Hello h;
    h.role = parse_role(detail::get_as<std::string>(j, "role"));
    h.session = detail::get_opt<std::string>(j, "session").value_or("");
    h.participant = detail::get_opt<std::string>(j, "participant").value_or("");
    return h;
  }
  if (type == "tabstate") return Tab{parse_tab_state(detail::get_as<std::string>(j, "state"))};
  if (type == "end") return End{};
  if (type == "snapshot") {
    Snapshot s;
    if (auto it = j.find("manifest"); it != j.end() && !it->is_null()) s.manifest = manifest_from(*it);
    for (const auto& m : detail::require(j, "metrics")) s.metrics.push_back(metrics_from(m));
    return s;
  }
  if (type == "fixation_end") return FixationEnd{fixation_from(j)};
  if (type == "saccade") return SaccadeEvent{saccade_from(j)};
  if (type == "metrics_update") {
    MetricsUpdate u{metrics_from(detail::require(j, "metrics"))};
    if (detail::get_as<int>(j, "word_index") != u.metrics.word_index) {
      throw error(errc::parse_error, "metrics_update word_index mismatch");
    }
    return u;
  }
  if (type == "error") return Error{detail::get_as<std::string>(j, "reason")};
  return Unknown{type};
}

inline Message parse(std::string_view text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw error(errc::parse_error, "invalid JSON");
  return from_json(j);
}

}  // namespace eyelive::proto

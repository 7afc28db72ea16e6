#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vidanno/export.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace vidanno {
namespace {

json pixel_json(Pixel p) { return json::array({p.x, p.y}); }
Pixel pixel_from(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>()}; }

json prompt_json(const Prompt& p) {
  json j{{"id", p.id},
         {"frame", p.frame},
         {"label", p.label},
         {"origin", p.origin == PromptOrigin::Human ? "human" : "auto"}};
  if (const auto* pt = p.point()) {
    j["point"] = pixel_json(pt->at);
    j["sign"] = pt->sign == PromptSign::Positive ? "positive" : "negative";
  } else if (const auto* bx = p.box()) {
    j["box"] = json::array({pixel_json(bx->corner_a), pixel_json(bx->corner_b)});
  }
  return j;
}

Prompt prompt_from(const json& j) {
  Prompt p;
  p.id = j.at("id").get<Token>();
  p.frame = j.at("frame").get<int>();
  p.label = j.at("label").get<int>();
  const std::string origin = j.at("origin").get<std::string>();
  if (origin != "human" && origin != "auto") fail(ErrorKind::Format, "bad prompt origin");
  p.origin = origin == "human" ? PromptOrigin::Human : PromptOrigin::Auto;
  if (j.contains("point")) {
    const std::string sign = j.at("sign").get<std::string>();
    if (sign != "positive" && sign != "negative") fail(ErrorKind::Format, "bad prompt sign");
    p.shape = PointShape{pixel_from(j["point"]),
                         sign == "positive" ? PromptSign::Positive : PromptSign::Negative};
  } else {
    const json& b = j.at("box");
    p.shape = BoxShape{pixel_from(b.at(0)), pixel_from(b.at(1))};
  }
  return p;
}

json event_json(const LogEvent& ev) {
  return std::visit(
      [](const auto& e) -> json {
        using E = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<E, log_event::AddPrompt>) {
          return {{"op", "add_prompt"}, {"prompt", prompt_json(e.prompt)}};
        } else if constexpr (std::is_same_v<E, log_event::DeletePrompt>) {
          return {{"op", "delete_prompt"}, {"id", e.id}};
        } else if constexpr (std::is_same_v<E, log_event::RegisterFeature>) {
          return {{"op", "register_feature"}, {"name", e.name}};
        } else if constexpr (std::is_same_v<E, log_event::RemoveFeature>) {
          return {{"op", "remove_feature"}, {"name", e.name}};
        } else if constexpr (std::is_same_v<E, log_event::SetFeature>) {
          return {{"op", "set_feature"},
                  {"id", e.edit.id},
                  {"feature", e.edit.feature},
                  {"label", e.edit.label},
                  {"frame", e.edit.frame},
                  {"value", e.edit.value}};
        } else if constexpr (std::is_same_v<E, log_event::DeleteFeatureEdit>) {
          return {{"op", "delete_feature_edit"}, {"id", e.id}};
        } else if constexpr (std::is_same_v<E, log_event::SetCheckpoint>) {
          return {{"op", "set_checkpoint"}, {"frame", e.frame}};
        } else {
          return {{"op", "clear_checkpoint"}, {"frame", e.frame}};
        }
      },
      ev);
}

LogEvent event_from(const json& j) {
  const std::string op = j.at("op").get<std::string>();
  if (op == "add_prompt") return log_event::AddPrompt{prompt_from(j.at("prompt"))};
  if (op == "delete_prompt") return log_event::DeletePrompt{j.at("id").get<Token>()};
  if (op == "register_feature") return log_event::RegisterFeature{j.at("name").get<std::string>()};
  if (op == "remove_feature") return log_event::RemoveFeature{j.at("name").get<std::string>()};
  if (op == "set_feature") {
    return log_event::SetFeature{FeatureEdit{j.at("id").get<Token>(),
                                             j.at("feature").get<std::string>(),
                                             j.at("label").get<int>(), j.at("frame").get<int>(),
                                             j.at("value").get<std::string>()}};
  }
  if (op == "delete_feature_edit") return log_event::DeleteFeatureEdit{j.at("id").get<Token>()};
  if (op == "set_checkpoint") return log_event::SetCheckpoint{j.at("frame").get<int>()};
  if (op == "clear_checkpoint") return log_event::ClearCheckpoint{j.at("frame").get<int>()};
  fail(ErrorKind::Format, "unknown journal op '" + op + "'");
}

const char* source_name(MaskSource s) {
  switch (s) {
    case MaskSource::Prompted: return "prompted";
    case MaskSource::Propagated: return "propagated";
    case MaskSource::Lookahead: return "lookahead";
  }
  return "propagated";
}

MaskSource source_from(const std::string& s) {
  if (s == "prompted") return MaskSource::Prompted;
  if (s == "propagated") return MaskSource::Propagated;
  if (s == "lookahead") return MaskSource::Lookahead;
  fail(ErrorKind::Format, "unknown mask source '" + s + "'");
}

json mask_json(const InstanceMask& m) {
  const RleMask r = rle_encode(m.bitmap);
  return {{"frame", m.frame},
          {"label", m.label},
          {"source", source_name(m.source)},
          {"version", m.version},
          {"rle", {{"width", r.width}, {"height", r.height}, {"counts", r.counts}}}};
}

InstanceMask mask_from(const json& j) {
  InstanceMask m;
  m.frame = j.at("frame").get<int>();
  m.label = j.at("label").get<int>();
  m.source = source_from(j.at("source").get<std::string>());
  m.version = j.at("version").get<std::uint64_t>();
  const json& r = j.at("rle");
  m.bitmap = rle_decode(RleMask{r.at("width").get<int>(), r.at("height").get<int>(),
                                r.at("counts").get<std::vector<std::uint32_t>>()});
  return m;
}

json settings_json(const SessionSettings& s) {
  return {{"auto_prompt", s.auto_prompt},           {"show_label_names", s.show_label_names},
          {"cache_enabled", s.cache_enabled},       {"view_mode", to_string(s.view_mode)},
          {"active_label", s.active_label},         {"cursor", s.cursor}};
}

SessionSettings settings_from(const json& j) {
  SessionSettings s;
  s.auto_prompt = j.at("auto_prompt").get<bool>();
  s.show_label_names = j.at("show_label_names").get<bool>();
  s.cache_enabled = j.at("cache_enabled").get<bool>();
  const auto mode = parse_view_mode(j.at("view_mode").get<std::string>());
  if (!mode) fail(ErrorKind::Format, "unknown view mode");
  s.view_mode = *mode;
  s.active_label = j.at("active_label").get<int>();
  s.cursor = j.at("cursor").get<int>();
  return s;
}

}  // namespace

void save_session_file(const SessionData& data, const fs::path& path) {
  json doc;
  doc["format_version"] = kSessionFormatVersion;
  doc["session_id"] = data.session_id;
  json media{{"source", data.media.source.string()},
             {"kind", data.media.kind == MediaKind::Video ? "video" : "image_dir"},
             {"frames", data.media.frames},
             {"width", data.media.width},
             {"height", data.media.height}};
  media["fps"] = data.media.fps ? json(*data.media.fps) : json(nullptr);
  doc["media"] = media;
  doc["block_size"] = data.block_size;
  json labels = json::array();
  for (const Label& l : data.labels.all()) labels.push_back({{"id", l.id}, {"name", l.name}});
  doc["labels"] = labels;
  json journal = json::array();
  for (const LogEvent& ev : data.log.journal()) journal.push_back(event_json(ev));
  doc["journal"] = journal;
  doc["settings"] = settings_json(data.settings);
  json masks = json::array();
  for (const InstanceMask* m : data.masks.all()) masks.push_back(mask_json(*m));
  for (const InstanceMask* m : data.masks.all_lookahead()) masks.push_back(mask_json(*m));
  doc["masks"] = masks;

  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    out << doc.dump();
    out.flush();
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::Io, "cannot replace " + path.string());
  }
}

SessionData load_session_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open session file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();

  json doc;
  try {
    doc = json::parse(buf.str());
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("session file is not valid JSON: ") + e.what());
  }

  try {
    if (!doc.is_object() || !doc.contains("format_version")) {
      fail(ErrorKind::Format, "session file has no format_version");
    }
    const int version = doc.at("format_version").get<int>();
    if (version != kSessionFormatVersion) {
      fail(ErrorKind::UnsupportedVersion, "session format version " + std::to_string(version) +
                                              " is not supported (expected " +
                                              std::to_string(kSessionFormatVersion) + ")");
    }
    SessionData data;
    data.session_id = doc.at("session_id").get<std::string>();
    const json& media = doc.at("media");
    data.media.source = media.at("source").get<std::string>();
    data.media.kind = media.at("kind").get<std::string>() == "video" ? MediaKind::Video
                                                                     : MediaKind::ImageDir;
    data.media.frames = media.at("frames").get<int>();
    data.media.width = media.at("width").get<int>();
    data.media.height = media.at("height").get<int>();
    if (!media.at("fps").is_null()) data.media.fps = media.at("fps").get<double>();
    data.block_size = doc.at("block_size").get<int>();
    if (data.media.frames < 1 || data.block_size < 1) fail(ErrorKind::Format, "bad media record");

    for (const json& l : doc.at("labels")) {
      const Label& made = data.labels.create(l.at("name").get<std::string>());
      if (made.id != l.at("id").get<int>()) fail(ErrorKind::Format, "label ids not contiguous");
    }

    std::vector<LogEvent> journal;
    for (const json& e : doc.at("journal")) journal.push_back(event_from(e));
    data.log = TimelineLog::replay(data.media.bounds(), journal);
    data.settings = settings_from(doc.at("settings"));

    data.masks = MaskStore(data.media.width, data.media.height);
    for (const json& m : doc.at("masks")) {
      InstanceMask mask = mask_from(m);
      if (!data.labels.contains(mask.label) || mask.frame < 0 || mask.frame >= data.media.frames) {
        fail(ErrorKind::Format, "mask refers to unknown label or frame");
      }
      data.masks.restore(std::move(mask));
    }
    return data;
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("malformed session file: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::UnsupportedVersion || e.kind() == ErrorKind::Format) throw;
    fail(ErrorKind::Format, std::string("invalid session file: ") + e.what());
  }
}

}  // namespace vidanno

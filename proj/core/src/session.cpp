#include "esd/service/session.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "esd/error.hpp"

namespace esd::service {

using nlohmann::json;

decode::DecodeConfig SessionOverrides::apply(decode::DecodeConfig base) const {
  if (alpha_override) base.alpha_override = *alpha_override;
  if (top_k) base.top_k = *top_k;
  if (top_p) base.top_p = *top_p;
  if (temperature) base.temperature = *temperature;
  if (repetition_penalty) base.repetition_penalty = *repetition_penalty;
  if (max_new_tokens) base.max_new_tokens = *max_new_tokens;
  return base;
}

namespace {

template <typename T>
void put_opt(json& j, const char* key, const std::optional<T>& v) {
  j[key] = v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

json ranking_to_json(const std::vector<std::pair<corpus::Strategy, double>>& r) {
  json arr = json::array();
  for (const auto& [s, p] : r) arr.push_back({{"strategy", corpus::display_name(s)}, {"probability", p}});
  return arr;
}

persona::PersonaSet persona_from_json(const json& j) {
  persona::PersonaSet p;
  p.sentences = j.at("sentences").get<std::vector<std::string>>();
  p.provenance = j.at("provenance").get<std::vector<std::size_t>>();
  if (p.sentences.size() != p.provenance.size()) throw ParseError("session: persona provenance length mismatch");
  return p;
}

}  // namespace

json to_json(const SessionOverrides& o) {
  json j = json::object();
  put_opt(j, "alpha_override", o.alpha_override);
  put_opt(j, "top_k", o.top_k);
  put_opt(j, "top_p", o.top_p);
  put_opt(j, "temperature", o.temperature);
  put_opt(j, "repetition_penalty", o.repetition_penalty);
  put_opt(j, "max_new_tokens", o.max_new_tokens);
  return j;
}

SessionOverrides overrides_from_json(const json& j) {
  if (j.is_null()) return {};
  if (!j.is_object()) throw ParseError("overrides must be a JSON object");
  static const char* known[] = {"alpha_override", "top_k", "top_p", "temperature", "repetition_penalty",
                                "max_new_tokens"};
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* n) { return k == n; }) == std::end(known)) {
      throw ParseError("unknown override '" + k + "'");
    }
  }
  SessionOverrides o;
  try {
    o.alpha_override = get_opt<double>(j, "alpha_override");
    o.top_k = get_opt<int>(j, "top_k");
    o.top_p = get_opt<double>(j, "top_p");
    o.temperature = get_opt<double>(j, "temperature");
    o.repetition_penalty = get_opt<double>(j, "repetition_penalty");
    o.max_new_tokens = get_opt<int>(j, "max_new_tokens");
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad override value: ") + e.what());
  }
  return o;
}

json persona_to_json(const persona::PersonaSet& p) {
  return {{"sentences", p.sentences}, {"provenance", p.provenance}};
}

json to_json(const Session& s) {
  json dialogue = json::array();
  for (std::size_t i = 0; i < s.dialogue.size(); ++i) {
    const auto& u = s.dialogue[i];
    json t = {{"turn", i}, {"speaker", corpus::speaker_name(u.speaker)}, {"text", u.text}};
    if (u.strategy) t["strategy"] = corpus::display_name(*u.strategy);
    if (const auto it = s.turn_meta.find(i); it != s.turn_meta.end()) {
      t["alpha_used"] = it->second.alpha_used;
      t["forced"] = it->second.forced;
      t["seed"] = it->second.seed;
      t["strategy_ranking"] = ranking_to_json(it->second.ranking);
    }
    dialogue.push_back(std::move(t));
  }
  json history = json::array();
  for (const auto& [turn, p] : s.persona_history) {
    json h = persona_to_json(p);
    h["turn"] = turn;
    history.push_back(std::move(h));
  }
  return {{"id", s.id},
          {"created_at_ms", s.created_at_ms},
          {"updated_at_ms", s.updated_at_ms},
          {"overrides", to_json(s.overrides)},
          {"dialogue", dialogue},
          {"persona", persona_to_json(s.persona)},
          {"persona_history", history}};
}

Session session_from_json(const json& j) {
  try {
    Session s;
    s.id = j.at("id").get<std::string>();
    s.created_at_ms = j.at("created_at_ms").get<std::int64_t>();
    s.updated_at_ms = j.at("updated_at_ms").get<std::int64_t>();
    s.overrides = overrides_from_json(j.at("overrides"));
    for (const auto& t : j.at("dialogue")) {
      corpus::Utterance u;
      const auto speaker = t.at("speaker").get<std::string>();
      if (speaker == "seeker") {
        u.speaker = corpus::Speaker::Seeker;
      } else if (speaker == "supporter") {
        u.speaker = corpus::Speaker::Supporter;
      } else {
        throw ParseError("session: unknown speaker '" + speaker + "'");
      }
      u.text = t.at("text").get<std::string>();
      if (t.contains("strategy")) {
        u.strategy = corpus::parse_strategy(t.at("strategy").get<std::string>());
        if (!u.strategy) throw ParseError("session: unknown strategy");
      }
      const std::size_t turn = s.dialogue.size();
      if (t.contains("alpha_used")) {
        TurnMeta m;
        m.alpha_used = t.at("alpha_used").get<double>();
        m.forced = t.at("forced").get<bool>();
        m.seed = t.at("seed").get<std::uint64_t>();
        for (const auto& r : t.at("strategy_ranking")) {
          const auto st = corpus::parse_strategy(r.at("strategy").get<std::string>());
          if (!st) throw ParseError("session: unknown strategy in ranking");
          m.ranking.emplace_back(*st, r.at("probability").get<double>());
        }
        s.turn_meta.emplace(turn, std::move(m));
      }
      s.dialogue.push_back(std::move(u));
    }
    s.persona = persona_from_json(j.at("persona"));
    for (const auto& h : j.at("persona_history")) {
      s.persona_history.emplace(h.at("turn").get<std::size_t>(), persona_from_json(h));
    }
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("session JSON: ") + e.what());
  }
}

bool valid_session_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isalnum(c) || c == '-' || c == '_'; });
}

void MemorySessionStore::put(const Session& session) {
  std::lock_guard lock(mu_);
  sessions_[session.id] = session;
}

std::optional<Session> MemorySessionStore::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

bool MemorySessionStore::contains(const std::string& id) const {
  std::lock_guard lock(mu_);
  return sessions_.count(id) > 0;
}

std::vector<std::string> MemorySessionStore::ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

FileSessionStore::FileSessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    std::ostringstream ss;
    ss << in.rdbuf();
    json j;
    try {
      j = json::parse(ss.str());
    } catch (const json::parse_error& e) {
      throw ParseError("session file " + entry.path().string() + ": " + e.what());
    }
    Session s = session_from_json(j);
    if (entry.path().stem().string() != s.id) {
      throw ValidationError("session file " + entry.path().string() + " holds id " + s.id);
    }
    index_.emplace(s.id, std::move(s));
  }
}

std::filesystem::path FileSessionStore::path_of(const std::string& id) const { return dir_ / (id + ".json"); }

void FileSessionStore::put(const Session& session) {
  if (!valid_session_id(session.id)) throw InvalidArgument("invalid session id '" + session.id + "'");
  const std::string body = to_json(session).dump(2) + "\n";
  std::lock_guard lock(mu_);
  const auto final_path = path_of(session.id);
  auto tmp = final_path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << body;
    out.flush();
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, final_path);
  index_[session.id] = session;
}

std::optional<Session> FileSessionStore::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool FileSessionStore::contains(const std::string& id) const {
  std::lock_guard lock(mu_);
  return index_.count(id) > 0;
}

std::vector<std::string> FileSessionStore::ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : index_) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace esd::service

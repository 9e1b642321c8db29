#include "cntf/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cstdio>

namespace cntf {

using nlohmann::json;

struct ChatEngine::Session {
  std::mutex mutex;
  std::vector<std::string> knowledge_raw;
  std::vector<Tokens> knowledge;
  std::vector<Triple> inline_triples;
  Dialogue transcript;
  StateBank bank;
  Tokens last_reply;
  int window = 0;
  int beam_width = 4;
  int max_len = 40;
  int turns = 0;
};

namespace {

ServiceReply error(int status, const std::string& message) { return {status, {{"error", message}}}; }

}  // namespace

std::string uuid_v4(std::mt19937_64& rng) {
  const std::uint64_t hi = (rng() & 0xFFFFFFFFFFFF0FFFULL) | 0x0000000000004000ULL;
  const std::uint64_t lo = (rng() & 0x3FFFFFFFFFFFFFFFULL) | 0x8000000000000000ULL;
  char buf[37];
  std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx", static_cast<unsigned>(hi >> 32),
                static_cast<unsigned>((hi >> 16) & 0xFFFF), static_cast<unsigned>(hi & 0xFFFF),
                static_cast<unsigned>(lo >> 48), static_cast<unsigned long long>(lo & 0xFFFFFFFFFFFFULL));
  return buf;
}

ChatEngine::ChatEngine(std::shared_ptr<const CntfModel> model, ServiceOptions options,
                       std::optional<ConceptLexicon> lexicon)
    : model_(std::move(model)), options_(options), rng_(options.seed) {
  if (model_ && lexicon) concepts_ = ConceptIndex(*lexicon, model_->vocab());
}

std::string ChatEngine::next_session_id() {
  std::lock_guard lock(mutex_);
  std::string id;
  do {
    id = uuid_v4(rng_);
  } while (sessions_.contains(id));
  return id;
}

std::shared_ptr<ChatEngine::Session> ChatEngine::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

ServiceReply ChatEngine::create_session(const json& body) {
  if (!model_) return error(503, "no model loaded");
  if (!body.is_object()) return error(400, "request body must be a JSON object");
  auto session = std::make_shared<Session>();
  session->window = model_->config().window;
  session->beam_width = options_.beam_width;
  session->max_len = options_.max_len;
  try {
    if (body.contains("knowledge")) {
      session->knowledge_raw = body.at("knowledge").get<std::vector<std::string>>();
    }
    if (body.contains("triples_inline")) {
      session->inline_triples = parse_triple_tsv(body.at("triples_inline").get<std::string>());
    }
    if (body.contains("config")) {
      const json& c = body.at("config");
      if (!c.is_object()) return error(400, "config must be an object");
      for (const auto& [key, value] : c.items()) {
        if (key != "window" && key != "beam_width" && key != "max_len") {
          return error(400, "unsupported config override '" + key + "'");
        }
        const int v = value.get<int>();
        if (v < 1) return error(400, "config override '" + key + "' must be >= 1");
        (key == "window" ? session->window : key == "beam_width" ? session->beam_width : session->max_len) = v;
      }
    }
  } catch (const TripleError& e) {
    return error(400, std::string("triples_inline: ") + e.what());
  } catch (const json::exception& e) {
    return error(400, e.what());
  }
  for (const auto& s : session->knowledge_raw) {
    Tokens t = tokenize(s);
    if (!t.empty()) session->knowledge.push_back(std::move(t));
  }
  if (session->knowledge.empty() && session->inline_triples.empty()) {
    return error(400, "session needs knowledge sentences or inline triples");
  }
  session->transcript.dialogue_id = "session";
  const std::string id = next_session_id();
  {
    std::lock_guard lock(mutex_);
    sessions_.emplace(id, session);
  }
  spdlog::info("session {} created with {} knowledge sentences, {} inline triples", id, session->knowledge.size(),
               session->inline_triples.size());
  return {201, {{"session_id", id}}};
}

ServiceReply ChatEngine::chat(const std::string& session_id, const json& body) {
  if (!model_) return error(503, "no model loaded");
  auto session = find(session_id);
  if (!session) return error(404, "unknown session '" + session_id + "'");
  std::string utterance;
  try {
    utterance = body.at("utterance").get<std::string>();
  } catch (const json::exception&) {
    return error(400, "body must contain a string 'utterance'");
  }
  const Tokens user = tokenize(utterance);
  if (user.empty()) return error(400, "empty utterance");

  std::lock_guard session_lock(session->mutex);
  TurnInput input;
  input.dialogue = session->last_reply;
  input.dialogue.insert(input.dialogue.end(), user.begin(), user.end());
  for (const Tokens& s : select_knowledge(user, session->knowledge, options_.knowledge_top_k)) {
    input.knowledge.insert(input.knowledge.end(), s.begin(), s.end());
  }
  input.window = session->window;

  session->transcript.turns.push_back({Speaker::kAgent1, utterance, {}});
  Dialogue source = session->transcript;
  for (const auto& s : session->knowledge_raw) source.turns.push_back({Speaker::kAgent2, s, {}});
  RuleBasedAnnotator annotator;
  TripleOptions triple_options;
  triple_options.cap = static_cast<std::size_t>(model_->config().triple_cap);
  TripleStore store = collect_dialogue_triples(source, annotator.coref(source), annotator, concepts_, triple_options);
  for (Triple t : session->inline_triples) store.insert(t);
  store.cap(triple_options.cap);
  input.triples = store.triples();

  Generation g = model_->generate(session->bank, input, session->beam_width, session->max_len);
  session->bank = std::move(g.bank);
  session->last_reply = g.words;
  const std::string reply = join(g.words);
  session->transcript.turns.push_back({Speaker::kAgent2, reply.empty() ? std::string(".") : reply, {}});
  session->turns += 1;

  json records = json::array();
  for (const TraceRecord& r : g.trace) records.push_back(to_json(r));
  const std::string trace_id = session_id + "-" + std::to_string(session->turns);
  {
    std::lock_guard lock(mutex_);
    traces_[trace_id] = records;
  }
  spdlog::debug("session {} turn {}: {} tokens", session_id, session->turns, g.ids.size());
  return {200, {{"response", reply}, {"trace_id", trace_id}, {"trace", records}}};
}

ServiceReply ChatEngine::trace(const std::string& trace_id) const {
  std::lock_guard lock(mutex_);
  auto it = traces_.find(trace_id);
  if (it == traces_.end()) return error(404, "unknown trace '" + trace_id + "'");
  return {200, it->second};
}

std::optional<StateBank> ChatEngine::bank(const std::string& session_id) const {
  auto session = find(session_id);
  if (!session) return std::nullopt;
  std::lock_guard lock(session->mutex);
  return session->bank;
}

void register_routes(httplib::Server& server, ChatEngine& engine, const std::optional<std::filesystem::path>& ui_dir) {
  auto respond = [](httplib::Response& res, const ServiceReply& reply) {
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  };
  auto parse = [](const httplib::Request& req) -> std::optional<json> {
    try {
      return req.body.empty() ? json::object() : json::parse(req.body);
    } catch (const json::exception&) {
      return std::nullopt;
    }
  };
  server.Post("/session", [&engine, respond, parse](const httplib::Request& req, httplib::Response& res) {
    auto body = parse(req);
    respond(res, body ? engine.create_session(*body) : ServiceReply{400, {{"error", "malformed JSON body"}}});
  });
  server.Post(R"(/session/([^/]+)/chat)", [&engine, respond, parse](const httplib::Request& req,
                                                                   httplib::Response& res) {
    auto body = parse(req);
    respond(res, body ? engine.chat(req.matches[1], *body) : ServiceReply{400, {{"error", "malformed JSON body"}}});
  });
  server.Get(R"(/trace/([^/]+))", [&engine, respond](const httplib::Request& req, httplib::Response& res) {
    respond(res, engine.trace(req.matches[1]));
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    spdlog::error("request failed: {}", message);
    res.status = 500;
    res.set_content(json{{"error", message}}.dump(), "application/json");
  });
  if (ui_dir && !server.set_mount_point("/", ui_dir->string())) {
    throw std::runtime_error("cannot serve UI from " + ui_dir->string());
  }
}

}  // namespace cntf

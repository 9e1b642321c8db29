#pragma once

// Chat sessions over a loaded model. ChatEngine holds all behaviour and
// returns (status, JSON) pairs; the HTTP layer only routes requests to it.

#include "cntf/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>

namespace httplib {
class Server;
}

namespace cntf {

struct ServiceOptions {
  std::uint64_t seed = 0;
  int beam_width = 4;
  int max_len = 40;
  int knowledge_top_k = 2;
};

struct ServiceReply {
  int status = 200;
  nlohmann::json body;
};

class ChatEngine {
 public:
  // `model` may be null, in which case every session request answers 503.
  ChatEngine(std::shared_ptr<const CntfModel> model, ServiceOptions options,
             std::optional<ConceptLexicon> lexicon = std::nullopt);

  // {knowledge: [str], triples_inline?: tsv, config?: {window, beam_width, max_len}}
  ServiceReply create_session(const nlohmann::json& body);
  // {utterance: str}
  ServiceReply chat(const std::string& session_id, const nlohmann::json& body);
  ServiceReply trace(const std::string& trace_id) const;

  bool has_model() const { return model_ != nullptr; }

  // Bank positions of a session, for inspection and tests.
  std::optional<StateBank> bank(const std::string& session_id) const;

 private:
  struct Session;

  std::string next_session_id();
  std::shared_ptr<Session> find(const std::string& id) const;

  std::shared_ptr<const CntfModel> model_;
  ServiceOptions options_;
  ConceptIndex concepts_;
  mutable std::mutex mutex_;  // guards sessions_, traces_ and rng_
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, nlohmann::json> traces_;
  std::mt19937_64 rng_;
};

// Random-looking but seed-determined version 4 UUID.
std::string uuid_v4(std::mt19937_64& rng);

// Mounts POST /session, POST /session/{id}/chat and GET /trace/{id}; serves
// static files from ui_dir when given.
void register_routes(httplib::Server& server, ChatEngine& engine,
                     const std::optional<std::filesystem::path>& ui_dir = std::nullopt);

}  // namespace cntf

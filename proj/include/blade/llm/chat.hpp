#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "blade/core.hpp"

namespace blade::llm {

enum class Role { System, User, Assistant };

std::string_view role_name(Role role);

struct ChatMessage {
  Role role;
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct Decoding {
  bool greedy = true;
  int max_new_tokens = 512;
  // Ignored under greedy decoding.
  double temperature = 0.0;

  double effective_temperature() const { return greedy ? 0.0 : temperature; }
  friend bool operator==(const Decoding&, const Decoding&) = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  Decoding decoding;

  // Throws InvalidConfig on an empty message list or max_new_tokens < 1.
  void validate() const;
  // Content of the final user message, or an empty string.
  const std::string& last_user_content() const;
  // Content of a leading system message, or an empty string.
  const std::string& system_content() const;
  friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};

// The black-box general model f.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::string id() const = 0;
};

struct GeneratorRequest {
  SoftEmbedding soft_embedding;
  std::string instruction_text;
  std::string question_id;
  std::string question_text;
  Decoding decoding;
};

// The soft-prompt-conditioned knowledge generator g.
class KnowledgeGenerator {
 public:
  virtual ~KnowledgeGenerator() = default;
  virtual std::size_t n_tokens() const = 0;
  virtual std::size_t hidden_dim() const = 0;
  virtual std::string id() const = 0;

 protected:
  friend std::string generate_knowledge(KnowledgeGenerator& generator, const GeneratorRequest& request);
  virtual std::string generate(const GeneratorRequest& request) = 0;
};

// Checks the embedding shape against the generator (DimMismatch), makes the
// single call allowed per (prompt, question) and rejects blank output
// (MalformedResponse).
std::string generate_knowledge(KnowledgeGenerator& generator, const GeneratorRequest& request);

// Wire bodies: {"model", "messages": [{"role", "content"}], "temperature", "max_tokens"},
// plus {"soft_embedding": {"shape": [n_tokens, hidden_dim], "data_b64"}} for generators.
nlohmann::json chat_request_body(const std::string& model, const ChatRequest& request);
nlohmann::json generator_request_body(const std::string& model, const GeneratorRequest& request);

// Extracts choices[0].message.content; throws MalformedResponse.
std::string parse_chat_response(std::string_view body);

// Base64 of little-endian float32 values in token order.
std::string encode_embedding(const SoftEmbedding& embedding);
SoftEmbedding decode_embedding(const nlohmann::json& soft_embedding);

}  // namespace blade::llm

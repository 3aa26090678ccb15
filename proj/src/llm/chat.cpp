#include "blade/llm/chat.hpp"

#include <bit>
#include <cstring>

#include "blade/error.hpp"
#include "blade/io.hpp"

namespace blade::llm {

std::string_view role_name(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

void ChatRequest::validate() const {
  if (messages.empty()) {
    throw Error(Errc::InvalidConfig, "chat request has no messages");
  }
  if (decoding.max_new_tokens < 1) {
    throw Error(Errc::InvalidConfig, "max_new_tokens must be at least 1");
  }
}

const std::string& ChatRequest::last_user_content() const {
  static const std::string kEmpty;
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == Role::User) {
      return it->content;
    }
  }
  return kEmpty;
}

const std::string& ChatRequest::system_content() const {
  static const std::string kEmpty;
  if (!messages.empty() && messages.front().role == Role::System) {
    return messages.front().content;
  }
  return kEmpty;
}

std::string generate_knowledge(KnowledgeGenerator& generator, const GeneratorRequest& request) {
  const auto& embedding = request.soft_embedding;
  if (embedding.n_tokens() != generator.n_tokens() || embedding.hidden_dim() != generator.hidden_dim()) {
    throw Error(Errc::DimMismatch, "embedding shape [" + std::to_string(embedding.n_tokens()) + ", " +
                                       std::to_string(embedding.hidden_dim()) + "] does not match generator [" +
                                       std::to_string(generator.n_tokens()) + ", " +
                                       std::to_string(generator.hidden_dim()) + "]");
  }
  std::string text = generator.generate(request);
  if (io::trim(text).empty()) {
    throw Error(Errc::MalformedResponse, "generator returned blank knowledge for " + request.question_id);
  }
  return text;
}

nlohmann::json chat_request_body(const std::string& model, const ChatRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& message : request.messages) {
    messages.push_back({{"role", role_name(message.role)}, {"content", message.content}});
  }
  return {{"model", model},
          {"messages", messages},
          {"temperature", request.decoding.effective_temperature()},
          {"max_tokens", request.decoding.max_new_tokens}};
}

nlohmann::json generator_request_body(const std::string& model, const GeneratorRequest& request) {
  ChatRequest chat;
  chat.messages = {{Role::System, request.instruction_text}, {Role::User, request.question_text}};
  chat.decoding = request.decoding;
  auto body = chat_request_body(model, chat);
  body["soft_embedding"] = {
      {"shape", {request.soft_embedding.n_tokens(), request.soft_embedding.hidden_dim()}},
      {"data_b64", encode_embedding(request.soft_embedding)}};
  return body;
}

std::string parse_chat_response(std::string_view body) {
  const auto doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(Errc::MalformedResponse, "response is not a JSON object");
  }
  const auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty()) {
    throw Error(Errc::MalformedResponse, "response has no choices");
  }
  const auto& first = choices->front();
  if (!first.contains("message") || !first["message"].contains("content") || !first["message"]["content"].is_string()) {
    throw Error(Errc::MalformedResponse, "response choice has no message content");
  }
  return first["message"]["content"].get<std::string>();
}

std::string encode_embedding(const SoftEmbedding& embedding) {
  const auto& flat = embedding.flat();
  std::string bytes;
  bytes.reserve(static_cast<std::size_t>(flat.size()) * 4);
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(flat[i]));
    for (int shift = 0; shift < 32; shift += 8) {
      bytes.push_back(static_cast<char>((bits >> shift) & 0xFFu));
    }
  }
  return io::base64_encode(bytes);
}

SoftEmbedding decode_embedding(const nlohmann::json& soft_embedding) {
  const auto shape = soft_embedding.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 2) {
    throw Error(Errc::MalformedResponse, "soft embedding shape must have two entries");
  }
  const std::string bytes = io::base64_decode(soft_embedding.at("data_b64").get<std::string>());
  const std::size_t count = shape[0] * shape[1];
  if (bytes.size() != count * 4) {
    throw Error(Errc::DimMismatch, "soft embedding payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                                       std::to_string(count * 4));
  }
  Eigen::VectorXd flat(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + static_cast<std::size_t>(b)])) << (8 * b);
    }
    flat[static_cast<Eigen::Index>(i)] = std::bit_cast<float>(bits);
  }
  return SoftEmbedding(shape[0], shape[1], std::move(flat));
}

}  // namespace blade::llm

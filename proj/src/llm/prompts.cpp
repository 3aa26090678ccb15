#include "blade/llm/prompts.hpp"

namespace blade::llm {

std::string render_options(const McqExample& example) {
  std::string out;
  for (const auto& option : example.options()) {
    if (!out.empty()) {
      out += '\n';
    }
    out += option.label;
    out += ". ";
    out += option.text;
  }
  return out;
}

namespace {

std::string question_section(const McqExample& example) {
  std::string out(kQuestionHeader);
  out += example.question_text();
  out += '\n';
  out += kOptionsHeader;
  out += '\n';
  out += render_options(example);
  return out;
}

}  // namespace

ChatRequest build_answer_prompt(const McqExample& example, const std::optional<std::string>& knowledge) {
  std::string user;
  if (knowledge) {
    user += kKnowledgeHeader;
    user += '\n';
    user += *knowledge;
    user += "\n\n";
  }
  user += question_section(example);
  ChatRequest request;
  request.messages = {{Role::System, std::string(kAnswerSystemPrompt)}, {Role::User, std::move(user)}};
  return request;
}

std::optional<std::string> knowledge_in_answer_prompt(const ChatRequest& request, const McqExample& example) {
  const std::string& content = request.last_user_content();
  const std::string prefix = std::string(kKnowledgeHeader) + "\n";
  if (content.compare(0, prefix.size(), prefix) != 0) {
    return std::nullopt;
  }
  const std::string suffix = "\n\n" + question_section(example);
  if (content.size() < prefix.size() + suffix.size() ||
      content.compare(content.size() - suffix.size(), suffix.size(), suffix) != 0) {
    return std::nullopt;
  }
  return content.substr(prefix.size(), content.size() - prefix.size() - suffix.size());
}

bool is_answer_prompt(const ChatRequest& request) { return request.system_content() == kAnswerSystemPrompt; }

}  // namespace blade::llm

#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "blade/core.hpp"
#include "blade/llm/chat.hpp"

namespace blade::llm {

inline constexpr std::string_view kAnswerSystemPrompt =
    "你是一名法律专家。请阅读题目并选出所有正确选项，最后一行以“答案是”开头给出选项字母。";
inline constexpr std::string_view kKnowledgeHeader = "背景知识：";
inline constexpr std::string_view kQuestionHeader = "问题：";
inline constexpr std::string_view kOptionsHeader = "选项：";
inline constexpr std::string_view kAnswerHeader = "答案：";
inline constexpr std::string_view kKnowledgeInstruction =
    "请根据问题生成有助于准确回答该问题的相关领域知识，包括适用的法律条文、概念和推理依据。";

// "A. text" lines joined by newlines.
std::string render_options(const McqExample& example);

// "[背景知识：\n<knowledge>\n\n]问题：<question>\n选项：\n<options>" under the
// answer system prompt, decoded greedily.
ChatRequest build_answer_prompt(const McqExample& example, const std::optional<std::string>& knowledge);

// Recovers the knowledge block from a prompt built by build_answer_prompt.
std::optional<std::string> knowledge_in_answer_prompt(const ChatRequest& request, const McqExample& example);

bool is_answer_prompt(const ChatRequest& request);

}  // namespace blade::llm

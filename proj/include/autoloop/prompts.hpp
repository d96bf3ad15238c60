#pragma once

#include <string>

namespace autoloop {

enum class PromptKind { kGround, kPlan, kAssess };

// Prompt text shipped in config/prompts; the first line carries the version.
const std::string& builtin_prompt(PromptKind kind);

}  // namespace autoloop

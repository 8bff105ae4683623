// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "great/mllm.hpp"
#include "great/types.hpp"

namespace great::mhacot {

// The four-step reasoning chain: object head (interaction part, geometric
// structure) then affordance head (interaction description, two analogical
// interactions). "{object}" is replaced with the object category.
struct PromptTemplates {
    std::array<std::string, 4> steps;
    static PromptTemplates defaults();
};

std::vector<std::string> build_prompt_chain(const std::string& object_category,
                                            const PromptTemplates& templates = PromptTemplates::defaults());

// Cache-first: returns the cached transcript when present; otherwise runs the
// conversation through the backend and caches the complete result.
ReasoningTranscript run_chain(const InteractionImage& image, const mllm::BackendConfig& config,
                              const std::filesystem::path& cache_dir,
                              const PromptTemplates& templates = PromptTemplates::defaults());

KnowledgeRecord parse_transcript(const ReasoningTranscript& transcript);

}  // namespace great::mhacot

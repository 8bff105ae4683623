// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "great/types.hpp"

namespace great::mllm {

struct BackendConfig {
    enum class Kind { http, fixture };
    Kind kind = Kind::fixture;

    // http backend
    std::string base_url;        // scheme://host:port[/endpoint-path]
    std::string auth_token_env;  // name of the env var holding the bearer token
    std::string model_name = "default";

    // fixture backend
    std::string fixture_path;

    int max_retries = 3;
    double timeout_s = 30.0;
    double retry_backoff_s = 0.5;  // doubled per attempt, capped at 4s
    int concurrency = 4;

    bool configured() const {
        return kind == Kind::http ? !base_url.empty() : !fixture_path.empty();
    }
};

// Runs one four-turn conversation about the image. Turns are sequential and
// each later prompt is sent with the full prior history. Returns exactly one
// answer per prompt.
std::vector<std::string> converse(const InteractionImage& image,
                                  const std::vector<std::string>& prompts,
                                  const BackendConfig& config);

// Transcript cache: one JSON file per image id under cache_dir. put is
// atomic (temp file + rename); corrupt files are quarantined as *.corrupt
// and treated as absent.
std::optional<ReasoningTranscript> cache_get(const std::string& image_id,
                                             const std::filesystem::path& cache_dir);
void cache_put(const ReasoningTranscript& transcript, const std::filesystem::path& cache_dir);

}  // namespace great::mllm

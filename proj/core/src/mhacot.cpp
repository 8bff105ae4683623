// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#include "great/mhacot.hpp"

#include <algorithm>
#include <cctype>

#include "great/error.hpp"

namespace great::mhacot {

PromptTemplates PromptTemplates::defaults() {
    return {{
        "Point out which part of the {object} in the image interacts with the person.",
        "Explain why this part can interact from the geometric structure of the {object}.",
        "Describe the interaction between {object} and the person.",
        "List two interactions that describe additional common interactions that the {object} can "
        "interact with people.",
    }};
}

namespace {

std::string substitute(std::string templ, const std::string& object) {
    const std::string key = "{object}";
    size_t pos = 0;
    while ((pos = templ.find(key, pos)) != std::string::npos) {
        templ.replace(pos, key.size(), object);
        pos += object.size();
    }
    return templ;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// split by "1." / "2." (/ "3." ...) enumeration markers
std::vector<std::string> split_enumeration(const std::string& text) {
    std::vector<size_t> marks;
    for (size_t i = 0; i + 1 < text.size(); ++i) {
        if (std::isdigit(static_cast<unsigned char>(text[i])) && text[i + 1] == '.') {
            // marker must start the string or follow whitespace
            if (i == 0 || std::isspace(static_cast<unsigned char>(text[i - 1]))) {
                marks.push_back(i);
            }
        }
    }
    std::vector<std::string> items;
    for (size_t k = 0; k < marks.size(); ++k) {
        const size_t begin = marks[k] + 2;  // skip "N."
        const size_t end = (k + 1 < marks.size()) ? marks[k + 1] : text.size();
        const std::string item = trim(text.substr(begin, end - begin));
        if (!item.empty()) items.push_back(item);
    }
    return items;
}

std::vector<std::string> split_bullets(const std::string& text) {
    std::vector<std::string> items;
    size_t pos = 0;
    while (pos <= text.size()) {
        const size_t nl = text.find('\n', pos);
        std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        line = trim(line);
        // strip ascii bullets and the UTF-8 bullet (U+2022)
        while (!line.empty()) {
            if (line.front() == '-' || line.front() == '*') {
                line.erase(line.begin());
            } else if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xe2 &&
                       static_cast<unsigned char>(line[1]) == 0x80 &&
                       static_cast<unsigned char>(line[2]) == 0xa2) {
                line.erase(0, 3);
            } else {
                break;
            }
            line = trim(line);
        }
        if (!line.empty()) items.push_back(line);
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    return items;
}

std::vector<std::string> split_semicolons(const std::string& text) {
    std::vector<std::string> items;
    size_t pos = 0;
    while (pos <= text.size()) {
        const size_t sc = text.find(';', pos);
        const std::string item =
            trim(text.substr(pos, sc == std::string::npos ? std::string::npos : sc - pos));
        if (!item.empty()) items.push_back(item);
        if (sc == std::string::npos) break;
        pos = sc + 1;
    }
    return items;
}

}  // namespace

std::vector<std::string> build_prompt_chain(const std::string& object_category,
                                            const PromptTemplates& templates) {
    if (object_category.empty()) {
        throw Error(ErrorKind::argument, "object category must be nonempty");
    }
    std::vector<std::string> prompts;
    prompts.reserve(4);
    for (const auto& t : templates.steps) prompts.push_back(substitute(t, object_category));
    return prompts;
}

ReasoningTranscript run_chain(const InteractionImage& image, const mllm::BackendConfig& config,
                              const std::filesystem::path& cache_dir,
                              const PromptTemplates& templates) {
    if (auto cached = mllm::cache_get(image.id, cache_dir)) {
        return *cached;
    }
    const std::vector<std::string> prompts = build_prompt_chain(image.object_category, templates);
    const std::vector<std::string> answers = mllm::converse(image, prompts, config);
    ReasoningTranscript t;
    t.image_id = image.id;
    t.object_category = image.object_category;
    for (size_t i = 0; i < 4; ++i) t.turns.push_back({prompts[i], answers[i]});
    mllm::cache_put(t, cache_dir);
    return t;
}

KnowledgeRecord parse_transcript(const ReasoningTranscript& transcript) {
    if (transcript.turns.size() != 4) {
        throw Error(ErrorKind::parse, "transcript must hold exactly 4 turns, got " +
                                          std::to_string(transcript.turns.size()));
    }
    for (const auto& [prompt, answer] : transcript.turns) {
        if (trim(answer).empty()) {
            throw Error(ErrorKind::parse, "transcript for '" + transcript.image_id +
                                              "' holds an empty answer");
        }
    }
    KnowledgeRecord rec;
    rec.image_id = transcript.image_id;
    rec.object_text = trim(transcript.turns[0].second) + " " + trim(transcript.turns[1].second);

    const std::string& fourth = transcript.turns[3].second;
    std::vector<std::string> items = split_enumeration(fourth);
    if (items.size() < 2) items = split_bullets(fourth);
    if (items.size() < 2) items = split_semicolons(fourth);
    if (items.size() < 2) {
        throw Error(ErrorKind::parse,
                    "cannot split two interactions out of turn-4 answer: \"" + fourth + "\"");
    }
    rec.affordance_texts = {trim(transcript.turns[2].second), items[0], items[1]};
    return rec;
}

}  // namespace great::mhacot

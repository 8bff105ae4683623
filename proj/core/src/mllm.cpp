// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#include "great/mllm.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "great/error.hpp"
#include "great/image_io.hpp"

namespace great::mllm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

io::Raster to_raster(const InteractionImage& img) {
    io::Raster r;
    r.width = img.width;
    r.height = img.height;
    r.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = img.pixels[static_cast<size_t>(c)][static_cast<size_t>(y * img.width + x)];
                r.at(y, x, c) = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            }
        }
    }
    return r;
}

std::pair<std::string, std::string> split_url(const std::string& base_url) {
    // scheme://host[:port][/path] -> (origin, endpoint path)
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorKind::config, "base_url must include a scheme: " + base_url);
    }
    const auto path_start = base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {base_url, "/v1/chat/completions"};
    }
    return {base_url.substr(0, path_start), base_url.substr(path_start)};
}

std::string extract_content(const json& message) {
    const auto& content = message.at("content");
    if (content.is_string()) return content.get<std::string>();
    if (content.is_array()) {
        std::string out;
        for (const auto& item : content) {
            if (item.contains("text")) out += item.at("text").get<std::string>();
        }
        return out;
    }
    throw Error(ErrorKind::protocol, "unrecognized message content shape in response");
}

std::vector<std::string> converse_http(const InteractionImage& image,
                                       const std::vector<std::string>& prompts,
                                       const BackendConfig& cfg) {
    const auto [origin, endpoint] = split_url(cfg.base_url);
    httplib::Client client(origin);
    client.set_connection_timeout(std::chrono::milliseconds(static_cast<int>(cfg.timeout_s * 1000)));
    client.set_read_timeout(std::chrono::milliseconds(static_cast<int>(cfg.timeout_s * 1000)));
    client.set_write_timeout(std::chrono::milliseconds(static_cast<int>(cfg.timeout_s * 1000)));

    httplib::Headers headers;
    if (!cfg.auth_token_env.empty()) {
        const char* token = std::getenv(cfg.auth_token_env.c_str());
        if (!token) {
            throw Error(ErrorKind::backend,
                        "auth env var not set: " + cfg.auth_token_env);
        }
        headers.insert({"Authorization", std::string("Bearer ") + token});
    }

    const std::string image_b64 = io::base64_encode(io::encode_png(to_raster(image)));

    json messages = json::array();
    std::vector<std::string> answers;
    for (size_t turn = 0; turn < prompts.size(); ++turn) {
        json content = json::array();
        content.push_back({{"type", "text"}, {"text", prompts[turn]}});
        if (turn == 0) {
            content.push_back({{"type", "image"}, {"data", image_b64}});
        }
        messages.push_back({{"role", "user"}, {"content", content}});

        const json payload = {{"model", cfg.model_name}, {"messages", messages}};
        const std::string body = payload.dump();

        std::string answer;
        int last_status = 0;
        std::string last_error;
        bool ok = false;
        for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
            if (attempt > 0) {
                const double backoff =
                    std::min(cfg.retry_backoff_s * std::pow(2.0, attempt - 1), 4.0);
                std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            }
            auto res = client.Post(endpoint, headers, body, "application/json");
            if (!res) {
                last_error = httplib::to_string(res.error());
                continue;
            }
            last_status = res->status;
            if (res->status >= 200 && res->status < 300) {
                try {
                    const json reply = json::parse(res->body);
                    answer = extract_content(reply.at("choices").at(0).at("message"));
                } catch (const json::exception& e) {
                    throw Error(ErrorKind::protocol,
                                "malformed chat response: " + std::string(e.what()));
                }
                ok = true;
                break;
            }
            if (res->status < 500 && res->status != 429) break;  // retrying 4xx is pointless
        }
        if (!ok) {
            throw Error(ErrorKind::backend,
                        "chat request failed after " + std::to_string(cfg.max_retries + 1) +
                            " attempts (status " + std::to_string(last_status) +
                            (last_error.empty() ? "" : ", " + last_error) + ")");
        }
        if (answer.empty()) {
            throw Error(ErrorKind::protocol, "backend returned an empty answer for turn " +
                                                 std::to_string(turn + 1));
        }
        messages.push_back({{"role", "assistant"},
                            {"content", json::array({{{"type", "text"}, {"text", answer}}})}});
        answers.push_back(std::move(answer));
    }
    return answers;
}

std::vector<std::string> converse_fixture(const InteractionImage& image,
                                          const std::vector<std::string>& prompts,
                                          const BackendConfig& cfg) {
    std::ifstream in(cfg.fixture_path);
    if (!in) throw Error(ErrorKind::config, "cannot open fixture file: " + cfg.fixture_path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::parse, "fixture parse error: " + std::string(e.what()));
    }
    if (!doc.contains(image.id)) {
        throw Error(ErrorKind::fixture_miss, "fixture has no answers for image id: " + image.id);
    }
    const auto& arr = doc.at(image.id);
    if (!arr.is_array() || arr.size() != prompts.size()) {
        throw Error(ErrorKind::protocol, "fixture entry for '" + image.id + "' must hold " +
                                             std::to_string(prompts.size()) + " answers");
    }
    std::vector<std::string> answers;
    for (const auto& a : arr) {
        std::string s = a.get<std::string>();
        if (s.empty()) {
            throw Error(ErrorKind::protocol, "fixture holds an empty answer for image id: " + image.id);
        }
        answers.push_back(std::move(s));
    }
    return answers;
}

}  // namespace

std::vector<std::string> converse(const InteractionImage& image,
                                  const std::vector<std::string>& prompts,
                                  const BackendConfig& config) {
    if (prompts.size() != 4) {
        throw Error(ErrorKind::argument, "converse expects exactly 4 prompts, got " +
                                             std::to_string(prompts.size()));
    }
    for (const auto& p : prompts) {
        if (p.empty()) throw Error(ErrorKind::argument, "empty prompt");
    }
    if (config.max_retries < 0) throw Error(ErrorKind::config, "max_retries must be >= 0");
    std::vector<std::string> answers = config.kind == BackendConfig::Kind::http
                                           ? converse_http(image, prompts, config)
                                           : converse_fixture(image, prompts, config);
    if (answers.size() != 4) {
        throw Error(ErrorKind::protocol, "backend returned " + std::to_string(answers.size()) +
                                             " answers instead of 4");
    }
    return answers;
}

// ---- cache ----

std::optional<ReasoningTranscript> cache_get(const std::string& image_id, const fs::path& cache_dir) {
    const fs::path file = cache_dir / (image_id + ".json");
    std::ifstream in(file);
    if (!in) return std::nullopt;
    const auto quarantine = [&]() {
        std::error_code ec;
        fs::rename(file, fs::path(file.string() + ".corrupt"), ec);
        std::cerr << "warning: quarantined corrupt cache file " << file << "\n";
    };
    try {
        const json doc = json::parse(in);
        ReasoningTranscript t;
        t.image_id = doc.at("image_id").get<std::string>();
        t.object_category = doc.at("object_category").get<std::string>();
        for (const auto& turn : doc.at("turns")) {
            t.turns.push_back({turn.at("prompt").get<std::string>(), turn.at("answer").get<std::string>()});
        }
        if (t.turns.size() != 4 || t.image_id != image_id) {
            quarantine();
            return std::nullopt;
        }
        return t;
    } catch (const json::exception&) {
        quarantine();
        return std::nullopt;
    }
}

void cache_put(const ReasoningTranscript& transcript, const fs::path& cache_dir) {
    if (transcript.turns.size() != 4) {
        throw Error(ErrorKind::argument, "refusing to cache a transcript without exactly 4 turns");
    }
    fs::create_directories(cache_dir);
    json doc;
    doc["image_id"] = transcript.image_id;
    doc["object_category"] = transcript.object_category;
    json turns = json::array();
    for (const auto& [prompt, answer] : transcript.turns) {
        turns.push_back({{"prompt", prompt}, {"answer", answer}});
    }
    doc["turns"] = turns;

    static std::atomic<uint64_t> counter{0};
    const auto tid = std::hash<std::thread::id>{}(std::this_thread::get_id());
    const fs::path tmp = cache_dir / (".tmp-" + transcript.image_id + "-" + std::to_string(tid) +
                                      "-" + std::to_string(counter.fetch_add(1)));
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error(ErrorKind::io, "cannot write cache temp file: " + tmp.string());
        out << doc.dump(2) << "\n";
        if (!out) throw Error(ErrorKind::io, "short write: " + tmp.string());
    }
    fs::rename(tmp, cache_dir / (transcript.image_id + ".json"));
}

}  // namespace great::mllm

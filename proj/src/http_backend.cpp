// SPDX-License-Identifier: Apache-2.0
#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>

#include <fmt/format.h>

#include "treeplan/llm.hpp"

namespace treeplan {

HttpBackend::HttpBackend(HttpConfig config, Tokenizer tokenizer)
    : config_(std::move(config)), tokenizer_(std::move(tokenizer)) {
    if (config_.base_url.empty()) {
        throw LlmError(LlmErrorKind::TransportError, "http backend needs a base URL");
    }
    while (!config_.base_url.empty() && config_.base_url.back() == '/') {
        config_.base_url.pop_back();
    }
}

CompletionResponse HttpBackend::complete(const CompletionRequest& request) {
    using nlohmann::json;
    json body = {
        {"model", config_.model},           {"prompt", request.prompt}, {"n", request.n},
        {"temperature", request.temperature}, {"top_p", request.top_p}, {"max_tokens", request.max_tokens},
    };
    if (!request.stop.empty()) {
        body["stop"] = request.stop;
    }

    // One client per call keeps concurrent episodes independent.
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
        headers.emplace("Authorization", fmt::format("Bearer {}", key));
    }

    auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!res) {
        throw LlmError(LlmErrorKind::TransportError,
                       fmt::format("POST {}{} failed: {}", config_.base_url, config_.path, httplib::to_string(res.error())));
    }
    json reply = json::parse(res->body, nullptr, false);
    if (res->status != 200 || reply.is_discarded() || reply.contains("error")) {
        std::string detail = res->body.substr(0, 300);
        if (!reply.is_discarded() && reply.contains("error") && reply["error"].is_object() &&
            reply["error"].contains("message")) {
            detail = reply["error"]["message"].get<std::string>();
        }
        throw LlmError(LlmErrorKind::ProviderError, fmt::format("provider returned {}: {}", res->status, detail));
    }
    if (!reply.contains("choices") || !reply["choices"].is_array()) {
        throw LlmError(LlmErrorKind::ProviderError, "provider response has no choices array");
    }

    std::vector<std::pair<long, std::string>> choices;
    long position = 0;
    for (const auto& choice : reply["choices"]) {
        long index = choice.contains("index") ? choice["index"].get<long>() : position;
        choices.emplace_back(index, choice.value("text", std::string{}));
        ++position;
    }
    std::stable_sort(choices.begin(), choices.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    if (static_cast<int>(choices.size()) != request.n) {
        throw LlmError(LlmErrorKind::ProviderError,
                       fmt::format("asked for {} completions, provider returned {}", request.n, choices.size()));
    }

    CompletionResponse response;
    for (auto& [_, text] : choices) {
        response.completions.push_back(std::move(text));
    }
    const auto usage = reply.contains("usage") ? reply["usage"] : json::object();
    if (usage.contains("prompt_tokens") && usage.contains("completion_tokens")) {
        response.usage.prompt_tokens = usage["prompt_tokens"].get<long>();
        response.usage.generated_tokens = usage["completion_tokens"].get<long>();
    } else {
        response.usage.prompt_tokens = tokenizer_(request.prompt);
        for (const auto& c : response.completions) {
            response.usage.generated_tokens += tokenizer_(c);
        }
    }
    return response;
}

} // namespace treeplan

// SPDX-License-Identifier: Apache-2.0
#include "treeplan/llm.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "text_util.hpp"
#include "treeplan/grammar.hpp"

namespace treeplan {

long count_tokens(std::string_view text) { return static_cast<long>(detail::split_ws(text).size()); }

std::string_view phase_name(Phase phase) {
    switch (phase) {
    case Phase::plan_sampling: return "plan_sampling";
    case Phase::grounded_deciding: return "grounded_deciding";
    case Phase::iterative: return "iterative";
    case Phase::replan: return "replan";
    }
    return "unknown";
}

double estimate_cost(long tokens, double rate_per_1k) { return static_cast<double>(tokens) / 1000.0 * rate_per_1k; }

void TokenLedger::append(Phase phase, const Usage& usage) {
    entries_.push_back(LedgerEntry{phase, usage.prompt_tokens, usage.generated_tokens,
                                   estimate_cost(usage.prompt_tokens + usage.generated_tokens, rate_)});
}

void TokenLedger::append_all(const TokenLedger& other) {
    for (const auto& e : other.entries()) {
        append(e.phase, Usage{e.prompt_tokens, e.generated_tokens});
    }
}

long TokenLedger::total_tokens() const {
    return std::accumulate(entries_.begin(), entries_.end(), 0L,
                           [](long acc, const LedgerEntry& e) { return acc + e.prompt_tokens + e.generated_tokens; });
}

long TokenLedger::tokens(Phase phase) const { return prompt_tokens(phase) + generated_tokens(phase); }

long TokenLedger::prompt_tokens(Phase phase) const {
    long sum = 0;
    for (const auto& e : entries_) {
        sum += e.phase == phase ? e.prompt_tokens : 0;
    }
    return sum;
}

long TokenLedger::generated_tokens(Phase phase) const {
    long sum = 0;
    for (const auto& e : entries_) {
        sum += e.phase == phase ? e.generated_tokens : 0;
    }
    return sum;
}

std::size_t TokenLedger::calls(Phase phase) const {
    return static_cast<std::size_t>(
        std::count_if(entries_.begin(), entries_.end(), [&](const LedgerEntry& e) { return e.phase == phase; }));
}

double TokenLedger::total_cost() const {
    double sum = 0.0;
    for (const auto& e : entries_) {
        sum += e.cost_usd;
    }
    return sum;
}

double TokenLedger::cost(Phase phase) const {
    double sum = 0.0;
    for (const auto& e : entries_) {
        sum += e.phase == phase ? e.cost_usd : 0.0;
    }
    return sum;
}

CompletionResponse complete(Backend& backend, const CompletionRequest& request, Phase phase, TokenLedger& ledger) {
    auto response = backend.complete(request);
    ledger.append(phase, response.usage);
    return response;
}

// ---------------------------------------------------------------------------
// Scripted backend

std::uint64_t prompt_hash(std::string_view prompt) { return detail::fnv1a64(prompt); }

namespace {

[[noreturn]] void format_error(std::string_view source, std::size_t line_no, std::string_view why) {
    throw LlmError(LlmErrorKind::TranscriptFormat, fmt::format("{}:{}: {}", source, line_no, why));
}

std::string tag_text(const RequestTag& tag) {
    return fmt::format("{} | {} | {} | {}", tag.scene, tag.task, tag.stream, tag.seq);
}

std::string join_block(const std::vector<std::string_view>& lines) {
    std::size_t begin = 0;
    std::size_t end = lines.size();
    while (begin < end && detail::trim(lines[begin]).empty()) {
        ++begin;
    }
    while (end > begin && detail::trim(lines[end - 1]).empty()) {
        --end;
    }
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (i > begin) {
            out += '\n';
        }
        out += lines[i];
    }
    return out;
}

} // namespace

void ScriptedBackend::add_entry(const RequestTag& tag, ScriptEntry entry) {
    if (!entries_.emplace(tag, std::move(entry)).second) {
        throw LlmError(LlmErrorKind::TranscriptFormat, fmt::format("duplicate transcript key '{}'", tag_text(tag)));
    }
}

void ScriptedBackend::add_document(std::string_view text, std::string_view source) {
    std::optional<RequestTag> tag;
    ScriptEntry entry;
    std::optional<int> repeat;
    std::vector<std::string_view> block;
    std::size_t line_no = 0;

    auto flush_block = [&] {
        if (repeat) {
            auto completion = join_block(block);
            for (int i = 0; i < *repeat; ++i) {
                entry.completions.push_back(completion);
            }
        }
        repeat.reset();
        block.clear();
    };
    auto flush_entry = [&] {
        flush_block();
        if (tag) {
            if (entry.completions.empty()) {
                format_error(source, line_no, fmt::format("entry '{}' has no completions", tag_text(*tag)));
            }
            add_entry(*tag, std::move(entry));
        }
        entry = ScriptEntry{};
        tag.reset();
    };

    for (auto line : detail::split_lines(text)) {
        ++line_no;
        if (line.starts_with("@@")) {
            flush_entry();
            std::vector<std::string_view> fields;
            auto rest = line.substr(2);
            std::size_t start = 0;
            while (true) {
                auto bar = rest.find('|', start);
                fields.push_back(detail::trim(rest.substr(start, bar == std::string_view::npos ? bar : bar - start)));
                if (bar == std::string_view::npos) {
                    break;
                }
                start = bar + 1;
            }
            if (fields.size() != 4) {
                format_error(source, line_no, "header is '@@ scene | task | stream | seq'");
            }
            int seq = 0;
            auto [ptr, ec] = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), seq);
            if (ec != std::errc{} || ptr != fields[3].data() + fields[3].size() || seq < 1) {
                format_error(source, line_no, "sequence number must be a positive integer");
            }
            tag = RequestTag{std::string(fields[0]), std::string(fields[1]), std::string(fields[2]), seq};
            continue;
        }
        if (line.starts_with("---")) {
            if (!tag) {
                format_error(source, line_no, "completion outside of an entry");
            }
            flush_block();
            auto spec = detail::trim(line.substr(3));
            int count = 1;
            if (!spec.empty()) {
                if (spec.front() != 'x') {
                    format_error(source, line_no, "block marker is '---' or '--- xN'");
                }
                auto digits = spec.substr(1);
                auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), count);
                if (ec != std::errc{} || ptr != digits.data() + digits.size() || count < 1) {
                    format_error(source, line_no, "repeat count must be a positive integer");
                }
            }
            repeat = count;
            continue;
        }
        if (repeat) {
            block.push_back(line);
            continue;
        }
        auto trimmed = detail::trim(line);
        if (trimmed.empty() || trimmed.front() == '#') {
            continue;
        }
        if (tag && trimmed.starts_with("hash:")) {
            auto hex = detail::trim(trimmed.substr(5));
            std::uint64_t value = 0;
            auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), value, 16);
            if (ec != std::errc{} || ptr != hex.data() + hex.size()) {
                format_error(source, line_no, "hash must be hexadecimal");
            }
            entry.prompt_hash = value;
            continue;
        }
        format_error(source, line_no, fmt::format("unexpected line '{}'", trimmed));
    }
    flush_entry();
}

ScriptedBackend ScriptedBackend::from_path(const std::filesystem::path& path, bool strict) {
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(path)) {
        for (const auto& entry : std::filesystem::recursive_directory_iterator(path)) {
            if (entry.is_regular_file() && entry.path().extension() == ".transcript") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
    } else if (std::filesystem::is_regular_file(path)) {
        files.push_back(path);
    }
    if (files.empty()) {
        throw LlmError(LlmErrorKind::TranscriptFormat, fmt::format("no transcripts found at '{}'", path.string()));
    }
    ScriptedBackend backend;
    backend.set_strict(strict);
    for (const auto& file : files) {
        std::ifstream in(file, std::ios::binary);
        std::ostringstream buffer;
        buffer << in.rdbuf();
        backend.add_document(buffer.str(), file.filename().string());
    }
    return backend;
}

std::string resolve_symbolic_ballot(std::string_view completion, std::string_view prompt) {
    auto trimmed = detail::trim(completion);
    if (!trimmed.starts_with('@')) {
        return std::string(completion);
    }
    auto wanted = detail::trim(trimmed.substr(1));
    std::string canonical;
    if (is_end_marker(wanted)) {
        canonical = "[END]";
    } else {
        canonical = render_action(parse_action(wanted));
    }
    // Only the last block of lettered lines counts; earlier ones belong to
    // the instruction's worked example.
    auto is_option = [](std::string_view line) {
        return line.size() > 3 && line[0] >= 'A' && line[0] <= 'Z' && line[1] == '.' && line[2] == ' ';
    };
    auto lines = detail::split_lines(prompt);
    auto it = lines.rbegin();
    while (it != lines.rend() && !is_option(detail::trim(*it))) {
        ++it;
    }
    for (; it != lines.rend() && is_option(detail::trim(*it)); ++it) {
        auto line = detail::trim(*it);
        if (line.substr(3) == canonical) {
            return std::string(1, line[0]);
        }
    }
    throw LlmError(LlmErrorKind::TranscriptMismatch,
                   fmt::format("symbolic ballot '{}' names an action that is not offered", canonical));
}

CompletionResponse ScriptedBackend::complete(const CompletionRequest& request) {
    auto it = entries_.find(request.tag);
    if (it == entries_.end()) {
        throw LlmError(LlmErrorKind::TranscriptExhausted,
                       fmt::format("no recorded completions for '{}'", tag_text(request.tag)));
    }
    const auto& entry = it->second;
    if (static_cast<int>(entry.completions.size()) != request.n) {
        throw LlmError(LlmErrorKind::TranscriptMismatch,
                       fmt::format("'{}' records {} completions but n = {}", tag_text(request.tag),
                                   entry.completions.size(), request.n));
    }
    if (strict_ && entry.prompt_hash && *entry.prompt_hash != prompt_hash(request.prompt)) {
        throw LlmError(LlmErrorKind::TranscriptMismatch,
                       fmt::format("prompt for '{}' hashes to {:016x}, transcript pins {:016x}", tag_text(request.tag),
                                   prompt_hash(request.prompt), *entry.prompt_hash));
    }
    auto completions = entry.completions;
    if (seed_ != 0 && request.tag.stream.ends_with("deciding")) {
        std::mt19937_64 rng(seed_ ^ detail::fnv1a64(tag_text(request.tag)));
        std::shuffle(completions.begin(), completions.end(), rng);
    }
    CompletionResponse response;
    response.usage.prompt_tokens = tokenizer_(request.prompt);
    for (const auto& c : completions) {
        response.completions.push_back(resolve_symbolic_ballot(c, request.prompt));
        response.usage.generated_tokens += tokenizer_(response.completions.back());
    }
    return response;
}

// ---------------------------------------------------------------------------
// Ballots

std::optional<std::size_t> extract_option(std::string_view completion, std::size_t option_count) {
    auto text = detail::trim(completion);
    auto index_of = [&](char c) -> std::optional<std::size_t> {
        if (c >= 'A' && static_cast<std::size_t>(c - 'A') < option_count) {
            return static_cast<std::size_t>(c - 'A');
        }
        return std::nullopt;
    };
    if (text.size() == 1) {
        if (auto idx = index_of(text[0])) {
            return idx;
        }
    }
    if (text.size() >= 2 && (text[1] == '.' || text[1] == ')')) {
        if (auto idx = index_of(text[0])) {
            return idx;
        }
    }
    auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; };
    for (std::size_t i = 0; i < text.size(); ++i) {
        bool left_ok = i == 0 || !is_word(text[i - 1]);
        bool right_ok = i + 1 == text.size() || !is_word(text[i + 1]);
        if (left_ok && right_ok) {
            if (auto idx = index_of(text[i])) {
                return idx;
            }
        }
    }
    return std::nullopt;
}

VoteResult majority_vote(const std::vector<std::string>& completions, std::size_t option_count) {
    VoteResult result;
    result.counts.assign(option_count, 0);
    for (const auto& c : completions) {
        if (auto idx = extract_option(c, option_count)) {
            result.counts[*idx] += 1;
        } else {
            result.no_match += 1;
        }
    }
    result.degenerate = option_count == 0 || result.no_match == static_cast<int>(completions.size());
    if (!result.counts.empty()) {
        // max_element returns the first maximum, so ties go to the earlier option.
        result.winner = static_cast<std::size_t>(std::max_element(result.counts.begin(), result.counts.end()) -
                                                 result.counts.begin());
    }
    return result;
}

} // namespace treeplan

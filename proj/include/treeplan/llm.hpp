// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "treeplan/errors.hpp"

namespace treeplan {

enum class LlmErrorKind { TranscriptExhausted, TranscriptMismatch, TranscriptFormat, TransportError, ProviderError };
using LlmError = KindedError<LlmErrorKind>;

/// Identifies a call for the scripted backend: which episode stream it
/// belongs to and its position in that stream.
struct RequestTag {
    std::string scene;
    std::string task;
    std::string stream; // sampling, deciding, iterative, local_replan, global_replan
    int seq = 0;

    friend auto operator<=>(const RequestTag&, const RequestTag&) = default;
};

struct CompletionRequest {
    std::string prompt;
    int n = 1;
    double temperature = 0.7;
    double top_p = 1.0;
    int max_tokens = 256;
    std::vector<std::string> stop;
    RequestTag tag;
};

struct Usage {
    long prompt_tokens = 0;
    long generated_tokens = 0;
};

struct CompletionResponse {
    std::vector<std::string> completions;
    Usage usage;
};

using Tokenizer = std::function<long(std::string_view)>;

/// Whitespace-delimited word count.
long count_tokens(std::string_view text);

class Backend {
public:
    virtual ~Backend() = default;
    virtual CompletionResponse complete(const CompletionRequest& request) = 0;
    [[nodiscard]] virtual std::string identity() const = 0;
};

// ---------------------------------------------------------------------------
// Token ledger

enum class Phase { plan_sampling, grounded_deciding, iterative, replan };

std::string_view phase_name(Phase phase);

inline constexpr double kDefaultRatePer1k = 0.02;

double estimate_cost(long tokens, double rate_per_1k = kDefaultRatePer1k);

struct LedgerEntry {
    Phase phase = Phase::plan_sampling;
    long prompt_tokens = 0;
    long generated_tokens = 0;
    double cost_usd = 0.0;
};

class TokenLedger {
public:
    explicit TokenLedger(double rate_per_1k = kDefaultRatePer1k) : rate_(rate_per_1k) {}

    void append(Phase phase, const Usage& usage);
    void append_all(const TokenLedger& other);

    [[nodiscard]] const std::vector<LedgerEntry>& entries() const { return entries_; }
    [[nodiscard]] double rate() const { return rate_; }
    [[nodiscard]] long total_tokens() const;
    [[nodiscard]] long tokens(Phase phase) const;
    [[nodiscard]] long prompt_tokens(Phase phase) const;
    [[nodiscard]] long generated_tokens(Phase phase) const;
    [[nodiscard]] std::size_t calls(Phase phase) const;
    [[nodiscard]] double total_cost() const;
    [[nodiscard]] double cost(Phase phase) const;

private:
    double rate_;
    std::vector<LedgerEntry> entries_;
};

/// Calls the backend and records exactly one ledger entry for the call.
CompletionResponse complete(Backend& backend, const CompletionRequest& request, Phase phase, TokenLedger& ledger);

// ---------------------------------------------------------------------------
// Scripted backend

struct ScriptEntry {
    std::vector<std::string> completions;
    std::optional<std::uint64_t> prompt_hash;
};

/// Replays recorded completions keyed by (scene, task, stream, seq). Files
/// are described in docs/transcript-format.md. A completion written as
/// "@<action>" is a symbolic ballot: it is replaced by the letter of the
/// option in the prompt that renders as <action>.
class ScriptedBackend final : public Backend {
public:
    explicit ScriptedBackend(Tokenizer tokenizer = count_tokens) : tokenizer_(std::move(tokenizer)) {}

    /// Loads every *.transcript file below `path` (or the single file).
    static ScriptedBackend from_path(const std::filesystem::path& path, bool strict = false);

    void add_document(std::string_view text, std::string_view source = "<memory>");
    void add_entry(const RequestTag& tag, ScriptEntry entry);
    void set_strict(bool strict) { strict_ = strict; }
    /// Non-zero seeds shuffle the ballot order of deciding calls (plain and
    /// oracle). Votes are order-free, so results must not change.
    void set_seed(std::uint64_t seed) { seed_ = seed; }

    CompletionResponse complete(const CompletionRequest& request) override;
    [[nodiscard]] std::string identity() const override { return "scripted"; }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }

private:
    Tokenizer tokenizer_;
    bool strict_ = false;
    std::uint64_t seed_ = 0;
    std::map<RequestTag, ScriptEntry> entries_;
};

/// Rewrites symbolic ballots against the lettered options found in `prompt`.
std::string resolve_symbolic_ballot(std::string_view completion, std::string_view prompt);

std::uint64_t prompt_hash(std::string_view prompt);

// ---------------------------------------------------------------------------
// HTTP backend (text-completion endpoint)

struct HttpConfig {
    std::string base_url;          // e.g. https://api.example.com
    std::string path = "/v1/completions";
    std::string model = "text-davinci-003";
    std::string api_key_env = "TREEPLAN_API_KEY";
    int timeout_seconds = 60;
};

class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpConfig config, Tokenizer tokenizer = count_tokens);

    CompletionResponse complete(const CompletionRequest& request) override;
    [[nodiscard]] std::string identity() const override { return "http"; }

private:
    HttpConfig config_;
    Tokenizer tokenizer_;
};

// ---------------------------------------------------------------------------
// Ballots

/// Index of the chosen option (0 = "A"), or nullopt when nothing matches.
std::optional<std::size_t> extract_option(std::string_view completion, std::size_t option_count);

struct VoteResult {
    std::size_t winner = 0;
    bool degenerate = false; // every ballot was NoMatch
    std::vector<int> counts; // per option
    int no_match = 0;
};

VoteResult majority_vote(const std::vector<std::string>& completions, std::size_t option_count);

inline char option_label(std::size_t index) { return static_cast<char>('A' + index); }

inline constexpr std::size_t kMaxOptions = 26;

} // namespace treeplan

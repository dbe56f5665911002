// SPDX-License-Identifier: Apache-2.0
#include "treeplan/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include <fmt/format.h>

#include "text_util.hpp"

namespace treeplan {

namespace {

struct ActionInfo {
    ActionType type;
    std::string_view name;
    Arity arity;
};

constexpr std::array<ActionInfo, kActionTypeCount> kActionTable{{
    {ActionType::Sleep, "Sleep", Arity::NoArg},
    {ActionType::StandUp, "StandUp", Arity::NoArg},
    {ActionType::WakeUp, "WakeUp", Arity::NoArg},
    {ActionType::Walk, "Walk", Arity::OneArg},
    {ActionType::Find, "Find", Arity::OneArg},
    {ActionType::Grab, "Grab", Arity::OneArg},
    {ActionType::Wash, "Wash", Arity::OneArg},
    {ActionType::Wipe, "Wipe", Arity::OneArg},
    {ActionType::Pull, "Pull", Arity::OneArg},
    {ActionType::Push, "Push", Arity::OneArg},
    {ActionType::Pour, "Pour", Arity::OneArg},
    {ActionType::TurnTo, "TurnTo", Arity::OneArg},
    {ActionType::PointAt, "PointAt", Arity::OneArg},
    {ActionType::Watch, "Watch", Arity::OneArg},
    {ActionType::Touch, "Touch", Arity::OneArg},
    {ActionType::Open, "Open", Arity::OneArg},
    {ActionType::Close, "Close", Arity::OneArg},
    {ActionType::Run, "Run", Arity::OneArg},
    {ActionType::Sit, "Sit", Arity::OneArg},
    {ActionType::Read, "Read", Arity::OneArg},
    {ActionType::PutOn, "PutOn", Arity::OneArg},
    {ActionType::Drop, "Drop", Arity::OneArg},
    {ActionType::Lie, "Lie", Arity::OneArg},
    {ActionType::SwitchOn, "SwitchOn", Arity::OneArg},
    {ActionType::SwitchOff, "SwitchOff", Arity::OneArg},
    {ActionType::Drink, "Drink", Arity::OneArg},
    {ActionType::PutIn, "PutIn", Arity::TwoArg},
    {ActionType::PutBack, "PutBack", Arity::TwoArg},
}};

const ActionInfo& info(ActionType type) {
    return kActionTable[static_cast<std::size_t>(type)];
}

std::size_t arg_count(Arity arity) {
    switch (arity) {
    case Arity::NoArg: return 0;
    case Arity::OneArg: return 1;
    case Arity::TwoArg: return 2;
    }
    return 0;
}

bool is_name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

class LineScanner {
public:
    explicit LineScanner(std::string_view line) : text_(line) {}

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])) != 0) {
            ++pos_;
        }
    }
    bool at_end() {
        skip_space();
        return pos_ >= text_.size();
    }
    bool consume(char c) {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    // Everything up to (not including) `close`, trimmed.
    std::optional<std::string_view> until(char close) {
        auto end = text_.find(close, pos_);
        if (end == std::string_view::npos) {
            return std::nullopt;
        }
        auto inner = detail::trim(text_.substr(pos_, end - pos_));
        pos_ = end + 1;
        return inner;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
};

[[noreturn]] void malformed(std::string_view line, std::string_view why) {
    throw GrammarError(GrammarErrorKind::MalformedLine, fmt::format("malformed action line '{}': {}", line, why));
}

ObjectRef scan_object(LineScanner& scan, std::string_view line) {
    if (!scan.consume('<')) {
        malformed(line, "expected '<'");
    }
    auto name = scan.until('>');
    if (!name || name->empty() || !std::all_of(name->begin(), name->end(), is_name_char)) {
        malformed(line, "object name must be an identifier");
    }
    if (!scan.consume('(')) {
        malformed(line, "expected '(' before instance id");
    }
    auto id_text = scan.until(')');
    int id = 0;
    if (!id_text || id_text->empty()) {
        malformed(line, "missing instance id");
    }
    auto [ptr, ec] = std::from_chars(id_text->data(), id_text->data() + id_text->size(), id);
    if (ec != std::errc{} || ptr != id_text->data() + id_text->size() || id <= 0) {
        malformed(line, "instance id must be a positive integer");
    }
    return ObjectRef{detail::to_lower(*name), id};
}

} // namespace

const std::array<ActionType, kActionTypeCount>& all_action_types() {
    static const auto types = [] {
        std::array<ActionType, kActionTypeCount> out{};
        for (std::size_t i = 0; i < kActionTypeCount; ++i) {
            out[i] = kActionTable[i].type;
        }
        return out;
    }();
    return types;
}

std::string_view action_name(ActionType type) { return info(type).name; }

Arity arity_of(ActionType type) { return info(type).arity; }

std::string_view arity_name(Arity arity) {
    switch (arity) {
    case Arity::NoArg: return "NoArg";
    case Arity::OneArg: return "OneArg";
    case Arity::TwoArg: return "TwoArg";
    }
    return "?";
}

std::optional<ActionType> lookup_action(std::string_view name) {
    for (const auto& entry : kActionTable) {
        if (detail::iequals(entry.name, name)) {
            return entry.type;
        }
    }
    return std::nullopt;
}

bool accepts_arg_count(ActionType type, std::size_t count) {
    if (type == ActionType::Pour) {
        return count == 1 || count == 2;
    }
    return count == arg_count(arity_of(type));
}

Arity action_arity(std::string_view name) {
    auto type = lookup_action(detail::trim(name));
    if (!type) {
        throw GrammarError(GrammarErrorKind::UnknownAction, fmt::format("unknown action '{}'", name));
    }
    return arity_of(*type);
}

bool is_end_marker(std::string_view line) { return detail::iequals(detail::trim(line), kEndMarker); }

Action parse_action(std::string_view line) {
    LineScanner scan(line);
    if (!scan.consume('[')) {
        malformed(line, "expected '['");
    }
    auto name = scan.until(']');
    if (!name || name->empty()) {
        malformed(line, "missing action name");
    }
    auto type = lookup_action(*name);
    if (!type) {
        throw GrammarError(GrammarErrorKind::UnknownAction, fmt::format("unknown action '{}'", *name));
    }
    Action action{*type, {}};
    while (!scan.at_end()) {
        if (action.args.size() == 2) {
            throw GrammarError(GrammarErrorKind::ArityMismatch,
                               fmt::format("[{}] takes at most 2 arguments", action_name(*type)));
        }
        action.args.push_back(scan_object(scan, line));
    }
    if (!accepts_arg_count(*type, action.args.size())) {
        throw GrammarError(GrammarErrorKind::ArityMismatch,
                           fmt::format("[{}] is {} but got {} argument(s)", action_name(*type),
                                       arity_name(arity_of(*type)), action.args.size()));
    }
    return action;
}

Plan parse_plan(std::string_view text, int source_index) {
    Plan plan;
    plan.source_index = source_index;
    bool seen_content = false;
    for (auto raw : detail::split_lines(text)) {
        auto line = detail::trim(raw);
        if (line.empty()) {
            continue;
        }
        if (!seen_content && line.starts_with("Task:")) {
            seen_content = true;
            continue;
        }
        seen_content = true;
        if (is_end_marker(line)) {
            break;
        }
        try {
            plan.actions.push_back(parse_action(line));
        } catch (const GrammarError&) {
            break;
        }
    }
    if (plan.actions.empty()) {
        throw GrammarError(GrammarErrorKind::EmptyPlan, "completion contains no parseable action");
    }
    return plan;
}

std::string render_object(const ObjectRef& ref) { return fmt::format("<{}> ({})", ref.name, ref.id); }

std::string render_action(const Action& action) {
    std::string out = fmt::format("[{}]", action_name(action.type));
    for (const auto& arg : action.args) {
        out += ' ';
        out += render_object(arg);
    }
    return out;
}

std::string render_plan(const Plan& plan) {
    std::string out;
    for (const auto& action : plan.actions) {
        out += render_action(action);
        out += '\n';
    }
    return out;
}

} // namespace treeplan

// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "testkit.hpp"
#include "treeplan/grammar.hpp"

using namespace treeplan;

TEST_CASE("parse_action on the canonical forms") {
    CHECK(parse_action("[Walk] <glass> (1)") == Action{ActionType::Walk, {{"glass", 1}}});
    CHECK(parse_action("[Sleep]") == Action{ActionType::Sleep, {}});
    CHECK(parse_action("[PutBack] <alarm_clock> (1) <dresser> (1)") ==
          Action{ActionType::PutBack, {{"alarm_clock", 1}, {"dresser", 1}}});
    CHECK(parse_action("  [Grab]   <cup>  (12)  ") == Action{ActionType::Grab, {{"cup", 12}}});
}

TEST_CASE("parse_action rejects bad input with a kind") {
    auto kind_of = [](std::string_view line) {
        try {
            parse_action(line);
        } catch (const GrammarError& e) {
            return e.kind();
        }
        FAIL("no error for ", line);
        return GrammarErrorKind::MalformedLine;
    };
    CHECK(kind_of("[Fly] <broom> (1)") == GrammarErrorKind::UnknownAction);
    CHECK(kind_of("[Sleep] <bed> (1)") == GrammarErrorKind::ArityMismatch);
    CHECK(kind_of("[Walk]") == GrammarErrorKind::ArityMismatch);
    CHECK(kind_of("[PutIn] <cup> (1)") == GrammarErrorKind::ArityMismatch);
    CHECK(kind_of("Walk to the bed") == GrammarErrorKind::MalformedLine);
    CHECK(kind_of("[Walk] <bed> (x)") == GrammarErrorKind::MalformedLine);
    CHECK(kind_of("[Walk] <bed>") == GrammarErrorKind::MalformedLine);
    // Exemplar-only verbs are not in the action set.
    CHECK(kind_of("[LookAt] <television> (1)") == GrammarErrorKind::UnknownAction);
    CHECK(kind_of("[Scrub] <teeth> (1)") == GrammarErrorKind::UnknownAction);
}

TEST_CASE("case normalization") {
    CHECK(parse_action("[WALK] <Bedroom> (1)") == parse_action("[Walk] <bedroom> (1)"));
    CHECK(render_action(parse_action("[PUTBACK] <plate> (1) <table> (1)")) == "[PutBack] <plate> (1) <table> (1)");
}

TEST_CASE("Pour takes one or two arguments") {
    CHECK(parse_action("[Pour] <milk> (1)").args.size() == 1);
    CHECK(parse_action("[Pour] <tooth_paste> (1) <toothbrush> (1)").args.size() == 2);
    CHECK(accepts_arg_count(ActionType::Pour, 1));
    CHECK(accepts_arg_count(ActionType::Pour, 2));
    CHECK_FALSE(accepts_arg_count(ActionType::Pour, 0));
}

TEST_CASE("render_action") {
    CHECK(render_action(Action{ActionType::Walk, {{"bedroom", 1}}}) == "[Walk] <bedroom> (1)");
    CHECK(render_action(Action{ActionType::Sleep, {}}) == "[Sleep]");
    CHECK(render_action(Action{ActionType::PutBack, {{"plate", 1}, {"table", 1}}}) == "[PutBack] <plate> (1) <table> (1)");
}

TEST_CASE("action_arity") {
    CHECK(action_arity("Sleep") == Arity::NoArg);
    CHECK(action_arity("PutIn") == Arity::TwoArg);
    CHECK(action_arity("Walk") == Arity::OneArg);
    CHECK_THROWS_AS(action_arity("Fly"), GrammarError);
}

TEST_CASE("arity table partitions the 28 names into the three listed classes") {
    const auto& lists = testkit::reference_action_lists();
    std::size_t total = 0;
    const Arity classes[] = {Arity::NoArg, Arity::OneArg, Arity::TwoArg};
    for (std::size_t k = 0; k < 3; ++k) {
        for (const auto& name : lists[k]) {
            CHECK(action_arity(name) == classes[k]);
            ++total;
        }
    }
    CHECK(total == kActionTypeCount);
    std::size_t seen = 0;
    for (auto t : all_action_types()) {
        std::string name(action_name(t));
        bool found = false;
        for (const auto& list : lists) {
            found = found || std::find(list.begin(), list.end(), name) != list.end();
        }
        CHECK_MESSAGE(found, name);
        seen += found ? 1 : 0;
    }
    CHECK(seen == kActionTypeCount);
}

TEST_CASE("parse_plan") {
    auto sleep = parse_plan("[Walk] <bedroom> (1)\n[Walk] <bed> (1)\n[Lie] <bed> (1)\n[Sleep]\n");
    CHECK(sleep.actions == std::vector<Action>{{ActionType::Walk, {{"bedroom", 1}}},
                                               {ActionType::Walk, {{"bed", 1}}},
                                               {ActionType::Lie, {{"bed", 1}}},
                                               {ActionType::Sleep, {}}});
    auto truncated = parse_plan("[Walk] <bedroom> (1)\ngarbage line\n[Sleep]");
    CHECK(truncated.actions.size() == 1);
    CHECK_THROWS_AS(parse_plan(""), GrammarError);
    CHECK(parse_plan("Task: Go to sleep\n\n[Sleep]\n[END]\n[Walk] <bed> (1)").actions.size() == 1);
    CHECK(parse_plan("[Sleep]", 7).source_index == 7);
    try {
        parse_plan("nothing useful");
        FAIL("expected EmptyPlan");
    } catch (const GrammarError& e) {
        CHECK(e.kind() == GrammarErrorKind::EmptyPlan);
    }
}

TEST_CASE("end marker") {
    CHECK(is_end_marker("[END]"));
    CHECK(is_end_marker("  [end] "));
    CHECK_FALSE(is_end_marker("[Sleep]"));
}

TEST_CASE("round trip over random actions") {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 2000; ++i) {
        auto a = testkit::random_action(rng);
        REQUIRE(parse_action(render_action(a)) == a);
    }
    std::vector<Action> actions;
    for (int i = 0; i < 30; ++i) {
        actions.push_back(testkit::random_action(rng));
    }
    Plan plan{actions, 0};
    CHECK(parse_plan(render_plan(plan)).actions == actions);
}

#pragma once

// Alternating population: in a conversation with agent responses a_1..a_A, every
// response a_i is "chosen" against the following response a_{i+1} as "rejected",
// with everything before a_i as the prompt. A conversation yields max(A - 1, 0)
// triplets.

#include "coala/core.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <functional>
#include <istream>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace coala {

enum class Role { user, agent };

inline const char* role_name(Role r) { return r == Role::user ? "user" : "agent"; }

struct Turn {
    Role role = Role::user;
    std::string content;
};

struct Conversation {
    std::string id;
    std::optional<std::string> system;
    std::vector<Turn> turns;
};

struct PreferenceTriplet {
    std::string prompt;
    std::string chosen;
    std::string rejected;
    std::string source_id;
    std::size_t pair_index = 0;  // 1-based within its conversation
};

/// Renders one prompt segment. The default writes "role: content".
using TurnFormatter = std::function<std::string(std::string_view role, std::string_view content)>;

inline std::string plain_turn(std::string_view role, std::string_view content) {
    std::string out(role);
    out += ": ";
    out += content;
    return out;
}

/// "<|im_start|>role\ncontent<|im_end|>", with the agent role written as "assistant".
inline std::string chatml_turn(std::string_view role, std::string_view content) {
    std::string out = "<|im_start|>";
    out += role == "agent" ? "assistant" : role;
    out += '\n';
    out += content;
    out += "<|im_end|>";
    return out;
}

inline std::string trim_trailing(std::string s) {
    const auto end = s.find_last_not_of(" \t\r\n\f\v");
    s.erase(end == std::string::npos ? 0 : end + 1);
    return s;
}

inline void validate(const Conversation& conv) {
    require(conv.turns.size() >= 2, "conversation '" + conv.id + "' has fewer than 2 turns");
    for (std::size_t i = 0; i < conv.turns.size(); ++i) {
        const Role expected = i % 2 == 0 ? Role::user : Role::agent;
        require(conv.turns[i].role == expected,
                "conversation '" + conv.id + "': turn " + std::to_string(i) + " breaks user/agent alternation");
    }
}

inline std::vector<PreferenceTriplet> extract_alternating(const Conversation& conv,
                                                          const TurnFormatter& format = plain_turn) {
    validate(conv);
    std::string prompt;
    auto append = [&](std::string_view role, const std::string& content) {
        if (!prompt.empty()) prompt += '\n';
        prompt += format(role, content);
    };
    if (conv.system) append("system", trim_trailing(*conv.system));

    // prompts[i] is the prompt in front of the i-th agent response.
    std::vector<std::string> responses;
    std::vector<std::string> prompts;
    for (const auto& turn : conv.turns) {
        std::string content = trim_trailing(turn.content);
        if (turn.role == Role::agent) {
            prompts.push_back(prompt);
            responses.push_back(content);
        }
        append(role_name(turn.role), content);
    }

    std::vector<PreferenceTriplet> out;
    for (std::size_t i = 0; i + 1 < responses.size(); ++i) {
        if (responses[i] == responses[i + 1]) continue;
        out.push_back({prompts[i], responses[i], responses[i + 1], conv.id, i + 1});
    }
    return out;
}

inline Conversation conversation_from_json(const nlohmann::json& j) {
    Conversation conv;
    try {
        if (j.contains("id")) conv.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
        if (j.contains("system") && !j["system"].is_null()) conv.system = j["system"].get<std::string>();
        for (const auto& t : j.at("turns")) {
            const auto role = t.at("role").get<std::string>();
            require(role == "user" || role == "agent", "unknown role '" + role + "'");
            conv.turns.push_back({role == "user" ? Role::user : Role::agent, t.at("content").get<std::string>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed conversation: ") + e.what());
    }
    return conv;
}

inline nlohmann::json to_json(const PreferenceTriplet& t) {
    return {{"prompt", t.prompt},
            {"chosen", t.chosen},
            {"rejected", t.rejected},
            {"source_id", t.source_id},
            {"pair_index", t.pair_index}};
}

inline PreferenceTriplet triplet_from_json(const nlohmann::json& j) {
    try {
        return {j.at("prompt").get<std::string>(), j.at("chosen").get<std::string>(),
                j.at("rejected").get<std::string>(), j.at("source_id").get<std::string>(),
                j.at("pair_index").get<std::size_t>()};
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed triplet: ") + e.what());
    }
}

struct CorpusStats {
    std::size_t conversations = 0;
    std::size_t triplets = 0;
    std::size_t skipped_records = 0;
    std::vector<std::string> errors;  // "line N: message" for each skipped record

    double triplets_per_conversation() const {
        return conversations == 0 ? 0.0 : static_cast<double>(triplets) / static_cast<double>(conversations);
    }
};

inline nlohmann::json to_json(const CorpusStats& s) {
    return {{"conversations", s.conversations},
            {"triplets", s.triplets},
            {"triplets_per_conversation", s.triplets_per_conversation()},
            {"skipped_records", s.skipped_records},
            {"errors", s.errors}};
}

using TripletSink = std::function<void(PreferenceTriplet&&)>;

inline CorpusStats extract_corpus(const std::vector<Conversation>& convs, const TripletSink& sink,
                                  const TurnFormatter& format = plain_turn) {
    CorpusStats stats;
    for (const auto& conv : convs) {
        auto triplets = extract_alternating(conv, format);
        ++stats.conversations;
        stats.triplets += triplets.size();
        for (auto& t : triplets) sink(std::move(t));
    }
    return stats;
}

/// JSONL variant: blank lines are ignored, unparsable or malformed records are skipped and counted.
inline CorpusStats extract_corpus(std::istream& in, const TripletSink& sink, const TurnFormatter& format = plain_turn) {
    CorpusStats stats;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<PreferenceTriplet> triplets;
        try {
            auto conv = conversation_from_json(nlohmann::json::parse(line));
            if (conv.id.empty()) conv.id = "line-" + std::to_string(lineno);
            triplets = extract_alternating(conv, format);
        } catch (const std::exception& e) {
            ++stats.skipped_records;
            stats.errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
            continue;
        }
        ++stats.conversations;
        stats.triplets += triplets.size();
        for (auto& t : triplets) sink(std::move(t));
    }
    return stats;
}

template <typename T>
struct Split {
    std::vector<T> train;
    std::vector<T> eval;
};

/// Seeded shuffle, then the first floor(ratio * N) items go to train.
template <typename T>
Split<T> split_train_eval(std::vector<T> items, double ratio, std::uint64_t seed) {
    require(ratio > 0.0 && ratio < 1.0, "split ratio must lie in (0, 1)");
    std::mt19937_64 rng(seed);
    std::shuffle(items.begin(), items.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(items.size()) + 1e-9));
    Split<T> out;
    out.train.assign(std::make_move_iterator(items.begin()), std::make_move_iterator(items.begin() + n_train));
    out.eval.assign(std::make_move_iterator(items.begin() + n_train), std::make_move_iterator(items.end()));
    return out;
}

}  // namespace coala

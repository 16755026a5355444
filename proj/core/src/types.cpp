#include "promptcal/types.hpp"

#include <unordered_set>

#include "promptcal/text.hpp"

namespace promptcal {

void Query::validate(std::size_t line) const {
    if (id.empty()) throw SchemaError(line, "id", "must be a non-empty string");
    if (trim(question).empty()) throw SchemaError(line, "question", "must be non-empty");
    if (options.size() < 2)
        throw SchemaError(line, "options", "need at least 2 options, got " +
                                               std::to_string(options.size()));
    if (options.size() > static_cast<std::size_t>(kMaxOptions))
        throw SchemaError(line, "options", "at most 26 options are addressable by letter");
    std::unordered_set<std::string> seen;
    for (const auto& opt : options) {
        if (!seen.insert(normalize_whitespace(opt)).second)
            throw SchemaError(line, "options", "duplicate option '" + opt + "'");
    }
    if (truth_index < 0 || truth_index >= option_count())
        throw SchemaError(line, "answer",
                          "index " + std::to_string(truth_index) + " out of range [0, " +
                              std::to_string(option_count()) + ")");
}

std::string to_string(InvalidReason r) {
    switch (r) {
        case InvalidReason::MissingAnswer: return "MissingAnswer";
        case InvalidReason::MissingConfidence: return "MissingConfidence";
        case InvalidReason::Unparseable: return "Unparseable";
        case InvalidReason::OutOfRangeOption: return "OutOfRangeOption";
    }
    return "Unparseable";
}

InvalidReason invalid_reason_from_string(const std::string& s) {
    if (s == "MissingAnswer") return InvalidReason::MissingAnswer;
    if (s == "MissingConfidence") return InvalidReason::MissingConfidence;
    if (s == "Unparseable") return InvalidReason::Unparseable;
    if (s == "OutOfRangeOption") return InvalidReason::OutOfRangeOption;
    throw ConfigError("unknown invalid reason '" + s + "'");
}

std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

Split split_from_string(const std::string& s) {
    const std::string v = to_lower(s);
    if (v == "train") return Split::Train;
    if (v == "val" || v == "validation") return Split::Val;
    if (v == "test") return Split::Test;
    throw ConfigError("unknown split '" + s + "' (expected train|val|test)");
}

}  // namespace promptcal

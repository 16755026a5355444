#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "promptcal/errors.hpp"

namespace promptcal {

/// One multiple-choice VQA instance. Immutable after construction.
struct Query {
    std::string id;
    std::optional<std::string> image_ref;  // opaque, forwarded verbatim to backends
    std::string question;
    std::vector<std::string> options;  // ordered, k >= 2
    int truth_index = 0;
    std::string extras_json;  // unknown input fields, preserved verbatim (serialized object)

    int option_count() const { return static_cast<int>(options.size()); }

    /// Throws SchemaError (with `line` for context) on any invariant violation.
    void validate(std::size_t line = 0) const;
};

enum class CgpSource { Learned, Fixed, None };

/// Auxiliary prompt appended to a query before the downstream call.
struct Cgp {
    std::string text;
    CgpSource source_tag = CgpSource::None;
};

enum class InvalidReason { MissingAnswer, MissingConfidence, Unparseable, OutOfRangeOption };

std::string to_string(InvalidReason r);
InvalidReason invalid_reason_from_string(const std::string& s);

/// Parsed downstream output: either a (answer, confidence) pair or an audit
/// record of why parsing failed.
class Prediction {
public:
    struct Valid {
        int answer_index = 0;
        double confidence = 0.0;  // in [0, 1], converted from the 0-100 scale
    };
    struct Invalid {
        std::string raw_text;  // retained for audit
        InvalidReason reason = InvalidReason::Unparseable;
    };

    static Prediction valid(int answer_index, double confidence) {
        return Prediction(Valid{answer_index, confidence});
    }
    static Prediction invalid(std::string raw_text, InvalidReason reason) {
        return Prediction(Invalid{std::move(raw_text), reason});
    }

    bool is_valid() const { return std::holds_alternative<Valid>(value_); }
    const Valid& as_valid() const { return std::get<Valid>(value_); }
    const Invalid& as_invalid() const { return std::get<Invalid>(value_); }

    bool correct(int truth_index) const {
        return is_valid() && as_valid().answer_index == truth_index;
    }

private:
    explicit Prediction(std::variant<Valid, Invalid> v) : value_(std::move(v)) {}
    std::variant<Valid, Invalid> value_;
};

enum class Split { Train, Val, Test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct Dataset {
    std::vector<Query> records;
    Split split_label = Split::Train;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
};

/// Option index <-> letter. Only A..Z are addressable, so k <= 26.
inline constexpr int kMaxOptions = 26;

inline char option_letter(int index) { return static_cast<char>('A' + index); }

inline int option_index(char letter) {
    if (letter >= 'a' && letter <= 'z') return letter - 'a';
    return letter - 'A';
}

}  // namespace promptcal

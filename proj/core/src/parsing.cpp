#include "promptcal/parsing.hpp"

#include <cmath>
#include <cstdio>
#include <regex>

#include "promptcal/text.hpp"

namespace promptcal {

void InstructionTemplate::validate() const {
    if (!contains_icase(answer_directive, "answer"))
        throw ConfigError("instruction: answer_directive must demand an answer");
    if (!contains_icase(confidence_directive, "confidence"))
        throw ConfigError("instruction: confidence_directive must demand a confidence score");
}

std::string render_downstream_prompt(const Query& query, const std::optional<Cgp>& cgp,
                                     const InstructionTemplate& tmpl) {
    std::string body = "Question: " + query.question + "\nOptions:";
    for (int i = 0; i < query.option_count(); ++i) {
        body += '\n';
        body += option_letter(i);
        body += ". ";
        body += query.options[static_cast<std::size_t>(i)];
    }

    std::string out;
    if (!tmpl.preamble.empty()) {
        out += tmpl.preamble;
        out += "\n\n";
    }
    out += body;
    if (cgp && !cgp->text.empty()) {
        out += "\n\n";
        out += cgp->text;
    }
    out += "\n\n";
    out += tmpl.answer_directive;
    out += '\n';
    out += tmpl.confidence_directive;
    return out;
}

namespace {

// Tolerant marker set, frozen by the fixture corpus: "Answer: B",
// "**Answer:** B", "Answer - B", letters optionally wrapped in ()/[] or bold.
// A separator (colon or dash) is required, so "the answer is B" does not match.
const std::regex& answer_regex() {
    static const std::regex re(
        R"(answer\s*(?:\*+|_+)?\s*[:\-]\s*(?:\*+|_+)?\s*[\(\[]?\s*([A-Za-z])(?![A-Za-z0-9]))",
        std::regex::icase | std::regex::optimize);
    return re;
}

const std::regex& confidence_regex() {
    static const std::regex re(
        R"(confidence(?:\s+(?:level|score))?\s*(?:\*+|_+)?\s*[:\-]\s*(?:\*+|_+)?\s*([+-]?[0-9]+(?:\.[0-9]+)?)\s*(%?))",
        std::regex::icase | std::regex::optimize);
    return re;
}

bool last_match(const std::string& text, const std::regex& re, std::smatch& out) {
    auto begin = std::sregex_iterator(text.begin(), text.end(), re);
    auto end = std::sregex_iterator();
    bool found = false;
    for (auto it = begin; it != end; ++it) {
        out = *it;
        found = true;
    }
    return found;
}

}  // namespace

Prediction parse_prediction(const std::string& raw, int k) {
    std::smatch am;
    if (!last_match(raw, answer_regex(), am))
        return Prediction::invalid(raw, InvalidReason::MissingAnswer);

    const int index = option_index(am[1].str()[0]);
    if (index < 0 || index >= k) return Prediction::invalid(raw, InvalidReason::OutOfRangeOption);

    std::smatch cm;
    if (!last_match(raw, confidence_regex(), cm))
        return Prediction::invalid(raw, InvalidReason::MissingConfidence);

    const std::string num = cm[1].str();
    double value = 0.0;
    try {
        value = std::stod(num);
    } catch (const std::exception&) {
        return Prediction::invalid(raw, InvalidReason::Unparseable);
    }
    if (value < 0.0 || value > 100.0) return Prediction::invalid(raw, InvalidReason::Unparseable);

    const bool percent = cm[2].matched && cm[2].length() > 0;
    const bool has_decimal_point = num.find('.') != std::string::npos;
    double confidence;
    if (!percent && has_decimal_point && value <= 1.0) {
        // already on the 0-1 scale ("Confidence: 0.9"); a bare integer "1"
        // stays on the 0-100 scale and reads as 0.01
        confidence = value;
    } else {
        confidence = value / 100.0;
    }
    return Prediction::valid(index, confidence);
}

std::string format_prediction(const Prediction::Valid& valid) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "Answer: %c\nConfidence: %d", option_letter(valid.answer_index),
                  static_cast<int>(std::lround(valid.confidence * 100.0)));
    return buf;
}

}  // namespace promptcal

#pragma once

#include <optional>
#include <string>

#include "promptcal/types.hpp"

namespace promptcal {

/// The downstream task instruction. The rendered block always demands both an
/// answer letter and a 0-100 confidence score; validate() enforces that the
/// directives actually mention them.
struct InstructionTemplate {
    std::string preamble =
        "You are answering a multiple-choice question about a medical image.";
    std::string answer_directive =
        "State your final answer on its own line as \"Answer: <letter>\".";
    std::string confidence_directive =
        "Then report how confident you are on its own line as \"Confidence: <score>\", "
        "where <score> is a whole number out of 100.";

    void validate() const;
};

/// Renders question + lettered options (+ CGP when present) + instruction.
/// Pure concatenation: equal inputs give byte-equal outputs. A CGP with empty
/// text renders identically to no CGP at all.
std::string render_downstream_prompt(const Query& query, const std::optional<Cgp>& cgp,
                                     const InstructionTemplate& tmpl);

/// Extracts the LAST answer marker and the LAST confidence marker from
/// free-form model text. Total: any byte string yields Valid or Invalid,
/// never throws. k is the option count of the query being answered.
Prediction parse_prediction(const std::string& raw, int k);

/// Canonical rendering of a valid prediction ("Answer: X\nConfidence: NN").
/// parse_prediction(format_prediction(v), k) round-trips for confidence on the
/// integer percent grid.
std::string format_prediction(const Prediction::Valid& valid);

}  // namespace promptcal

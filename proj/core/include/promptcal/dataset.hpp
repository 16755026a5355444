#pragma once

#include <cstdint>
#include <string>

#include "promptcal/types.hpp"

namespace promptcal {

/// Loads a JSON Lines dataset. Each line is one object with fields
/// id, question, options (array of strings), answer (0-based index or option
/// letter), optional image. Unknown fields are preserved in Query::extras_json.
/// Throws IoError, SchemaError{line, field}, DuplicateIdError.
Dataset load_dataset(const std::string& path, Split split_label);

Dataset parse_dataset(const std::string& jsonl, Split split_label);

/// Serializes back to JSON Lines (canonical field order, extras merged in).
std::string serialize_dataset(const Dataset& dataset);
void save_dataset(const Dataset& dataset, const std::string& path);

/// Deterministic pseudo-random subset of size n. A pure function of the record
/// id set, n and seed: every record is keyed by hash(seed, id) and the n
/// smallest keys are taken, so the result is independent of file order.
/// Throws SizeError if n exceeds the dataset size.
Dataset split_sample(const Dataset& dataset, std::size_t n, std::uint64_t seed);

}  // namespace promptcal

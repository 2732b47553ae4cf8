#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "pqmlab/trajectory.hpp"

namespace pqm {

inline constexpr int kCorpusSchemaVersion = 1;

/// Record <-> JSON object. Field names are part of the file format.
nlohmann::ordered_json record_to_json(const CorpusRecord& record);
/// Throws ValidationError naming the field on any invariant violation.
CorpusRecord record_from_json(const nlohmann::json& j);

/// One JSON object per line. Returns the number of records written.
std::size_t serialize_corpus(const Corpus& corpus, const std::filesystem::path& destination);
std::string serialize_corpus_to_string(const Corpus& corpus);

/// Inverse of serialize_corpus. Errors carry the 1-based line number.
Corpus parse_corpus(const std::filesystem::path& source);
Corpus parse_corpus_string(const std::string& text, const std::string& source_name = "<string>");

}  // namespace pqm

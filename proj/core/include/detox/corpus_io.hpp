#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace detox {

struct CorpusRecord {
  std::string id;
  std::string text;
  /// Remaining input fields as a serialized JSON object, passed through to
  /// the per-item results.
  std::string extra_json = "{}";
};

/// One JSON object per line. Missing ids are replaced by the 0-based record
/// index. Throws DataFileError.
std::vector<CorpusRecord> read_jsonl(const std::filesystem::path& path,
                                     std::string_view text_field = "text",
                                     std::string_view id_field = "id");

/// RFC 4180 CSV with a header row. Throws DataFileError.
std::vector<CorpusRecord> read_csv(const std::filesystem::path& path,
                                   std::string_view text_field = "text",
                                   std::string_view id_field = "id");

/// Dispatches on `format` ("jsonl" or "csv"); an empty format is inferred
/// from the file extension.
std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path, std::string_view format,
                                      std::string_view text_field = "text",
                                      std::string_view id_field = "id");

/// Splits CSV content into rows of fields.
std::vector<std::vector<std::string>> parse_csv(std::string_view content);

/// Integer ids first in numeric order, then the rest lexicographically.
bool id_less(const std::string& a, const std::string& b);

}  // namespace detox

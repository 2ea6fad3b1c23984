#include "detox/corpus_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "detox/errors.hpp"

namespace detox {
namespace {

using nlohmann::ordered_json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFileError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string id_string(const ordered_json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

bool parse_int(const std::string& s, long long& out) {
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

}  // namespace

std::vector<CorpusRecord> read_jsonl(const std::filesystem::path& path, std::string_view text_field,
                                     std::string_view id_field) {
  std::ifstream in(path);
  if (!in) throw DataFileError("cannot open " + path.string());
  std::vector<CorpusRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    auto obj = ordered_json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) throw DataFileError(where + ": not a JSON object");
    const auto text_it = obj.find(std::string(text_field));
    if (text_it == obj.end() || !text_it->is_string()) {
      throw DataFileError(where + ": missing string field '" + std::string(text_field) + "'");
    }
    CorpusRecord rec;
    rec.text = text_it->get<std::string>();
    obj.erase(text_it);
    if (const auto id_it = obj.find(std::string(id_field)); id_it != obj.end()) {
      rec.id = id_string(*id_it);
      obj.erase(id_it);
    } else {
      rec.id = std::to_string(out.size());
    }
    rec.extra_json = obj.dump();
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool row_has_data = false;
  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        row_has_data = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        row_has_data = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_data || !field.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        field.clear();
        row.clear();
        row_has_data = false;
        break;
      default:
        field.push_back(c);
        row_has_data = true;
    }
  }
  if (quoted) throw DataFileError("unterminated quoted CSV field");
  if (row_has_data || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<CorpusRecord> read_csv(const std::filesystem::path& path, std::string_view text_field,
                                   std::string_view id_field) {
  const auto rows = parse_csv(read_file(path));
  if (rows.empty()) throw DataFileError(path.string() + ": missing CSV header");
  const auto& header = rows.front();
  const auto find_col = [&](std::string_view name) -> std::ptrdiff_t {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  const auto text_col = find_col(text_field);
  if (text_col < 0) throw DataFileError(path.string() + ": no column '" + std::string(text_field) + "'");
  const auto id_col = find_col(id_field);

  std::vector<CorpusRecord> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      throw DataFileError(path.string() + ": row " + std::to_string(r + 1) + " has " +
                          std::to_string(row.size()) + " fields, header has " +
                          std::to_string(header.size()));
    }
    CorpusRecord rec;
    rec.text = row[static_cast<std::size_t>(text_col)];
    rec.id = id_col >= 0 ? row[static_cast<std::size_t>(id_col)] : std::to_string(out.size());
    ordered_json extra = ordered_json::object();
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (static_cast<std::ptrdiff_t>(c) == text_col || static_cast<std::ptrdiff_t>(c) == id_col) continue;
      extra[header[c]] = row[c];
    }
    rec.extra_json = extra.dump();
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path, std::string_view format,
                                      std::string_view text_field, std::string_view id_field) {
  std::string fmt(format);
  if (fmt.empty()) fmt = path.extension() == ".csv" ? "csv" : "jsonl";
  if (fmt == "jsonl") return read_jsonl(path, text_field, id_field);
  if (fmt == "csv") return read_csv(path, text_field, id_field);
  throw ConfigError("unknown input format '" + fmt + "' (expected jsonl or csv)");
}

bool id_less(const std::string& a, const std::string& b) {
  long long x = 0, y = 0;
  const bool a_num = parse_int(a, x);
  const bool b_num = parse_int(b, y);
  if (a_num != b_num) return a_num;  // integer ids first
  if (a_num && x != y) return x < y;
  return a < b;
}

}  // namespace detox

#include "intentkit/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "intentkit/error.hpp"

namespace intentkit {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void chomp(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& contents) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << contents;
    if (!out) throw IoError("write failed for " + path);
}

std::vector<std::string> split_delimited(const std::string& line, char delim) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back().push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                fields.back().push_back(c);
            }
        } else if (c == '"' && fields.back().empty()) {
            quoted = true;
        } else if (c == delim) {
            fields.emplace_back();
        } else {
            fields.back().push_back(c);
        }
    }
    return fields;
}

LabeledSet parse_delimited(const std::string& text, char delim, const std::string& source_name) {
    LabeledSet rows;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        chomp(line);
        if (line.empty()) continue;
        auto fields = split_delimited(line, delim);
        if (fields.size() != 2)
            throw ParseError(ParseError::Kind::malformed, source_name + ":" + std::to_string(line_no) + ": expected 2 fields, got " +
                                                              std::to_string(fields.size()));
        if (rows.empty() && line_no == 1 && fields[0] == "text" && fields[1] == "label") continue;
        rows.push_back({std::move(fields[0]), std::move(fields[1])});
    }
    return rows;
}

LabeledSet parse_labeled_jsonl(const std::string& text, const std::string& source_name) {
    LabeledSet rows;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        chomp(line);
        if (line.empty()) continue;
        const auto where = source_name + ":" + std::to_string(line_no);
        try {
            auto j = nlohmann::json::parse(line);
            auto text_it = j.find("text");
            if (text_it == j.end()) text_it = j.find("utterance");
            if (text_it == j.end() || !j.contains("label"))
                throw ParseError(ParseError::Kind::missing_key, where + ": record needs text and label");
            rows.push_back({text_it->get<std::string>(), j.at("label").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(ParseError::Kind::malformed, where + ": " + e.what());
        }
    }
    return rows;
}

LabeledSet load_labeled(const std::string& path) {
    const auto text = read_file(path);
    if (ends_with(path, ".jsonl")) return parse_labeled_jsonl(text, path);
    if (ends_with(path, ".tsv")) return parse_delimited(text, '\t', path);
    if (ends_with(path, ".csv")) return parse_delimited(text, ',', path);
    throw ConfigError("unsupported labeled-data extension (want .jsonl, .tsv or .csv): " + path);
}

void save_labeled_jsonl(const LabeledSet& rows, const std::string& path) {
    std::string out;
    for (const auto& r : rows) out += nlohmann::json{{"text", r.text}, {"label", r.label}}.dump() + "\n";
    write_file(path, out);
}

std::vector<std::string> load_lines(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        chomp(line);
        if (!line.empty()) lines.push_back(std::move(line));
    }
    return lines;
}

std::vector<std::string> labels_of(const LabeledSet& rows) {
    std::set<std::string> labels;
    for (const auto& r : rows) labels.insert(r.label);
    return {labels.begin(), labels.end()};
}

}  // namespace intentkit

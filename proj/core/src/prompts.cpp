#include "intentkit/prompts.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "intentkit/assets.hpp"
#include "intentkit/error.hpp"

namespace intentkit {

namespace {

bool is_slot_char(char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'; }

// Length of the slot name starting at tmpl[i] == '{', or 0 if this brace does not open a slot.
std::size_t slot_length(std::string_view tmpl, std::size_t i) {
    std::size_t j = i + 1;
    while (j < tmpl.size() && is_slot_char(tmpl[j])) ++j;
    if (j == i + 1 || j >= tmpl.size() || tmpl[j] != '}' || tmpl[i + 1] < 'a' || tmpl[i + 1] > 'z') return 0;
    return j - i - 1;
}

}  // namespace

std::string render_template(std::string_view tmpl, const Slots& slots) {
    std::string out;
    out.reserve(tmpl.size());
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl[i] == '{') {
            if (auto n = slot_length(tmpl, i)) {
                std::string name(tmpl.substr(i + 1, n));
                auto it = slots.find(name);
                if (it == slots.end()) throw MissingSlot(name);
                out += it->second;
                i += n + 1;
                continue;
            }
        }
        out.push_back(tmpl[i]);
    }
    return out;
}

std::vector<std::string> template_slots(std::string_view tmpl) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl[i] != '{') continue;
        if (auto n = slot_length(tmpl, i)) {
            std::string name(tmpl.substr(i + 1, n));
            if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
            i += n + 1;
        }
    }
    return out;
}

std::string PromptLibrary::get(const std::string& name) const {
    if (!override_dir_.empty()) {
        auto path = std::filesystem::path(override_dir_) / (name + ".txt");
        if (std::filesystem::exists(path)) {
            std::ifstream in(path, std::ios::binary);
            if (!in) throw IoError("cannot read prompt override " + path.string());
            std::ostringstream buf;
            buf << in.rdbuf();
            return buf.str();
        }
    }
    auto asset = find_asset(name + ".txt");
    if (!asset) throw ConfigError("unknown prompt template: " + name);
    return std::string(*asset);
}

std::string quoted_list(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", '" : "'") + items[i] + "'";
    return out;
}

std::string bullet_list(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& item : items) out += "- " + item + "\n";
    return out;
}

}  // namespace intentkit

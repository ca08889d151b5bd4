#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace intentkit {

using Slots = std::map<std::string, std::string>;

// Replaces every {slot_name} (lowercase letters, digits, '_') with its value. Other braces, such
// as the JSON skeleton in generation prompts, are left alone. Throws MissingSlot.
std::string render_template(std::string_view tmpl, const Slots& slots);

// Slot names in order of first appearance.
std::vector<std::string> template_slots(std::string_view tmpl);

// Named prompt templates: the bundled assets, optionally overridden by <dir>/<name>.txt files.
class PromptLibrary {
  public:
    PromptLibrary() = default;
    explicit PromptLibrary(std::string override_dir) : override_dir_(std::move(override_dir)) {}

    // Throws ConfigError for an unknown name.
    std::string get(const std::string& name) const;
    std::string render(const std::string& name, const Slots& slots) const {
        return render_template(get(name), slots);
    }

  private:
    std::string override_dir_;
};

// Renders a list as "'a', 'b', 'c'" (the word lists of the coherence prompts).
std::string quoted_list(const std::vector<std::string>& items);
// One "- item" per line.
std::string bullet_list(const std::vector<std::string>& items);

}  // namespace intentkit

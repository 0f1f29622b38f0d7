#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <string>

#include "cli/settings.hpp"

namespace understory::cli {

using Command = std::function<void(const Settings&, std::ostream& log)>;

/// Subcommand name -> implementation, with a one-line description.
struct CommandInfo {
  Command run;
  std::string help;
};

const std::map<std::string, CommandInfo>& commands();

}  // namespace understory::cli

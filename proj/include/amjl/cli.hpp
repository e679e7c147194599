#pragma once

namespace amjl {

/// Exit codes: 0 success, 1 usage error, 2 runtime failure.
int cli_main(int argc, char** argv);

}  // namespace amjl

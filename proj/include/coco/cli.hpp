#pragma once

namespace coco {

// Full command-line entry point: split, train, eval, kernel, selfcheck,
// gen-toy.  Returns the process exit code: 0 success, 1 runtime failure,
// 2 usage or configuration error.
int run_cli(int argc, const char* const* argv);

}  // namespace coco

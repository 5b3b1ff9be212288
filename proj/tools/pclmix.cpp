#include <torch/torch.h>

#include "pclmix/cli.hpp"

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  return pclmix::cli::run(argc, argv);
}

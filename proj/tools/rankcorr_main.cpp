// CLI for clustered-data Spearman rank correlation estimation and
// simulation studies. Subcommands: estimate, simulate.

#include <cstdio>

int main(int, char**) {
  std::puts("rankcorr: placeholder");
  return 0;
}

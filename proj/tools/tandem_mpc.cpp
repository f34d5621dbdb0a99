#include "tandem/sim.hpp"
int main() { return 0; }

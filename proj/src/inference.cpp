#include "sketchlab/nn.hpp"

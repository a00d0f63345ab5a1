#pragma once

// Built-in copy of data/decoder_tables.txt; a unit test keeps the two equal.

#include <string_view>

namespace semhint::arch {

inline constexpr std::string_view kDefaultDecoderTables = R"manifest(# Decoder layer tables for the shared depth / segmentation network.
#
#   encoder <name> <econv1..econv5 channels> <encoder parameter count>
#   table <depth | l0..l4>
#   layer <name> <inputs> <k> <s> <chn> <bn|-> <activation>
#
# Inputs are comma separated. "^x" is a 2x nearest upsample of x, "^N:x" an
# N-times upsample. Encoder features econv1..econv5 sit at 1/2..1/32 of the
# input resolution.

encoder resnet18 64 64 128 256 512 11176512
encoder resnet50 64 256 512 1024 2048 23508032

table depth
layer upconv5  econv5            3 1 256 - ELU
layer iconv5   ^upconv5,econv4   3 1 256 - ELU
layer upconv4  iconv5            3 1 128 - ELU
layer iconv4   ^upconv4,econv3   3 1 128 - ELU
layer disp4    iconv4            3 1 1   - Sigmoid
layer upconv3  iconv4            3 1 64  - ELU
layer iconv3   ^upconv3,econv2   3 1 64  - ELU
layer disp3    iconv3            3 1 1   - Sigmoid
layer upconv2  iconv3            3 1 32  - ELU
layer iconv2   ^upconv2,econv1   3 1 32  - ELU
layer disp2    iconv2            3 1 1   - Sigmoid
layer upconv1  iconv2            3 1 16  - ELU
layer iconv1   ^upconv1          3 1 16  - ELU
layer disp1    iconv1            3 1 1   - Sigmoid

# l0: only the encoder is shared.
table l0
layer upsconv5 econv5            3 1 256 - ELU
layer isconv5  ^upsconv5,econv4  3 1 256 - ELU
layer upsconv4 isconv5           3 1 128 - ELU
layer isconv4  ^upsconv4,econv3  3 1 128 - ELU
layer upsconv3 isconv4           3 1 64  - ELU
layer isconv3  ^upsconv3,econv2  3 1 64  - ELU
layer upsconv2 isconv3           3 1 32  - ELU
layer isconv2  ^upsconv2,econv1  3 1 32  - ELU
layer upsconv1 isconv2           3 1 16  - ELU
layer isconv1  ^upsconv1         3 1 16  - ELU
layer sconv1   ^16:upsconv5,^8:upsconv4,^4:upsconv3,^2:upsconv2,upsconv1 3 1 128 bn ReLU
layer sconv2   sconv1            3 1 128 bn ReLU
layer sconv3   sconv2            1 1 1   - Softmax

table l1
layer upsconv4 iconv5            3 1 128 - ELU
layer isconv4  ^upsconv4,econv3  3 1 128 - ELU
layer upsconv3 isconv4           3 1 64  - ELU
layer isconv3  ^upsconv3,econv2  3 1 64  - ELU
layer upsconv2 isconv3           3 1 32  - ELU
layer isconv2  ^upsconv2,econv1  3 1 32  - ELU
layer upsconv1 isconv2           3 1 16  - ELU
layer isconv1  ^upsconv1         3 1 16  - ELU
layer sconv1   ^16:upconv5,^8:upsconv4,^4:upsconv3,^2:upsconv2,upsconv1 3 1 128 bn ReLU
layer sconv2   sconv1            3 1 128 bn ReLU
layer sconv3   sconv2            1 1 1   - Softmax

table l2
layer upsconv3 iconv4            3 1 64  - ELU
layer isconv3  ^upsconv3,econv2  3 1 64  - ELU
layer upsconv2 isconv3           3 1 32  - ELU
layer isconv2  ^upsconv2,econv1  3 1 32  - ELU
layer upsconv1 isconv2           3 1 16  - ELU
layer isconv1  ^upsconv1         3 1 16  - ELU
layer sconv1   ^16:upconv5,^8:upconv4,^4:upsconv3,^2:upsconv2,upsconv1 3 1 128 bn ReLU
layer sconv2   sconv1            3 1 128 bn ReLU
layer sconv3   sconv2            1 1 1   - Softmax

table l3
layer upsconv2 iconv3            3 1 32  - ELU
layer isconv2  ^upsconv2,econv1  3 1 32  - ELU
layer upsconv1 isconv2           3 1 16  - ELU
layer isconv1  ^upsconv1         3 1 16  - ELU
layer sconv1   ^16:upconv5,^8:upconv4,^4:upconv3,^2:upsconv2,upsconv1 3 1 128 bn ReLU
layer sconv2   sconv1            3 1 128 bn ReLU
layer sconv3   sconv2            1 1 1   - Softmax

# l4: the whole decoder trunk is shared. Upsample factors follow feature
# resolution (upconv4 at 1/16 needs x8, upconv3 at 1/8 needs x4).
table l4
layer sconv1   ^16:upconv5,^8:upconv4,^4:upconv3,^2:upconv2,upconv1 3 1 128 bn ReLU
layer sconv2   sconv1            3 1 128 bn ReLU
layer sconv3   sconv2            1 1 1   - Softmax
)manifest";

}  // namespace semhint::arch

// Copyright (c) 2015 Big Switch Networks, Inc
// SPDX-License-Identifier: Apache-2.0

/*
 * Interpreter loop of a user-space eBPF VM, reduced to the parts the
 * conformance fixtures exercise.
 */

#include <stdint.h>
#include <stdbool.h>
#include <string.h>
#include "ebpf.h"
#include "ubpf_int.h"

#define SHIFT_MASK_32_BIT(X) ((X) & 0x1f)
#define SHIFT_MASK_64_BIT(X) ((X) & 0x3f)

static bool
bounds_check(const struct ubpf_vm* vm, void* addr, int size, const char* type, uint16_t cur_pc, void* mem,
             size_t mem_len, void* stack)
{
    if (mem && (addr >= mem && ((char*)addr + size) <= ((char*)mem + mem_len))) {
        /* Memory in-bounds */
        return true;
    } else if ((char*)addr >= (char*)stack && ((char*)addr + size) <= ((char*)stack + UBPF_STACK_SIZE)) {
        /* Stack in-bounds */
        return true;
    }
    vm->error_printf(stderr, "uBPF error: out of bounds memory %s at PC %u, addr %p, size %d\n", type, cur_pc,
                     addr, size);
    return false;
}

int
ubpf_exec(const struct ubpf_vm* vm, void* mem, size_t mem_len, uint64_t* bpf_return_value)
{
    uint16_t pc = 0;
    const struct ebpf_inst* insts = vm->insts;
    uint64_t reg[11] = {0};
    uint64_t stack[UBPF_STACK_SIZE / sizeof(uint64_t)];
    uint64_t insn_cnt = 0;

    reg[1] = (uintptr_t)mem;
    reg[2] = (uint64_t)mem_len;
    reg[10] = (uintptr_t)stack + sizeof(stack);

    while (1) {
        const uint16_t cur_pc = pc;
        struct ebpf_inst inst = insts[pc++];

        switch (inst.opcode) {
        case BPF_ALU | BPF_ADD | BPF_K:
            reg[inst.dst] = (uint32_t)(reg[inst.dst] + inst.imm);
            break;
        case BPF_ALU | BPF_ADD | BPF_X:
            reg[inst.dst] = (uint32_t)(reg[inst.dst] + reg[inst.src]);
            break;
        case BPF_ALU | BPF_SUB | BPF_K:
            reg[inst.dst] = (uint32_t)(reg[inst.dst] - inst.imm);
            break;
        case BPF_ALU | BPF_SUB | BPF_X:
            reg[inst.dst] = (uint32_t)(reg[inst.dst] - reg[inst.src]);
            break;
        case BPF_ALU | BPF_MUL | BPF_K:
            reg[inst.dst] = (uint32_t)(reg[inst.dst] * inst.imm);
            break;
        case BPF_ALU | BPF_MUL | BPF_X:
            reg[inst.dst] = (uint32_t)(reg[inst.dst] * reg[inst.src]);
            break;
        case BPF_ALU | BPF_DIV | BPF_K:
            if (inst.offset == 1) {
                reg[inst.dst] = inst.imm ? (uint32_t)((int32_t)reg[inst.dst] / (int32_t)inst.imm) : 0;
            } else {
                reg[inst.dst] = inst.imm ? (uint32_t)reg[inst.dst] / (uint32_t)inst.imm : 0;
            }
            break;
        case BPF_ALU | BPF_DIV | BPF_X:
            reg[inst.dst] = reg[inst.src] == 0 ? 0 : (uint32_t)reg[inst.dst] / (uint32_t)reg[inst.src];
            break;
        case BPF_ALU | BPF_OR | BPF_K:
            reg[inst.dst] = (uint32_t)(reg[inst.dst] | inst.imm);
            break;
        case BPF_ALU | BPF_OR | BPF_X:
            reg[inst.dst] = (uint32_t)(reg[inst.dst] | reg[inst.src]);
            break;
        case BPF_ALU | BPF_AND | BPF_K:
            reg[inst.dst] = (uint32_t)(reg[inst.dst] & inst.imm);
            break;
        case BPF_ALU | BPF_AND | BPF_X:
            reg[inst.dst] = (uint32_t)(reg[inst.dst] & reg[inst.src]);
            break;
        case BPF_ALU | BPF_LSH | BPF_K:
            reg[inst.dst] = (uint32_t)(reg[inst.dst] << SHIFT_MASK_32_BIT(inst.imm));
            break;
        case BPF_ALU | BPF_LSH | BPF_X:
            reg[inst.dst] = (uint32_t)(reg[inst.dst] << SHIFT_MASK_32_BIT(reg[inst.src]));
            break;
        case BPF_ALU | BPF_RSH | BPF_K:
            reg[inst.dst] = (uint32_t)(reg[inst.dst]) >> (inst.imm & 31);
            break;
        case BPF_ALU | BPF_RSH | BPF_X:
            reg[inst.dst] = (uint32_t)(reg[inst.dst]) >> (reg[inst.src] & 31);
            break;
        case BPF_ALU | BPF_NEG:
            reg[inst.dst] = (uint32_t)(-(int32_t)reg[inst.dst]);
            break;
        case BPF_ALU | BPF_MOD | BPF_K:
            if (inst.offset == 1) {
                reg[inst.dst] = inst.imm ? (uint32_t)((int32_t)reg[inst.dst] % (int32_t)inst.imm) : (uint32_t)reg[inst.dst];
            } else {
                reg[inst.dst] = inst.imm ? (uint32_t)reg[inst.dst] % (uint32_t)inst.imm : (uint32_t)reg[inst.dst];
            }
            break;
        case BPF_ALU | BPF_MOD | BPF_X:
            reg[inst.dst] = reg[inst.src] == 0 ? (uint32_t)reg[inst.dst] : (uint32_t)reg[inst.dst] % (uint32_t)reg[inst.src];
            break;
        case BPF_ALU | BPF_XOR | BPF_K:
            reg[inst.dst] = (uint32_t)(reg[inst.dst] ^ inst.imm);
            break;
        case BPF_ALU | BPF_XOR | BPF_X:
            reg[inst.dst] = (uint32_t)(reg[inst.dst] ^ reg[inst.src]);
            break;
        case BPF_ALU | BPF_MOV | BPF_K:
            reg[inst.dst] = (uint32_t)inst.imm;
            break;
        case BPF_ALU | BPF_MOV | BPF_X:
            if (inst.offset == 8) {
                reg[inst.dst] = (uint32_t)(int32_t)(int8_t)reg[inst.src];
            } else if (inst.offset == 16) {
                reg[inst.dst] = (uint32_t)(int32_t)(int16_t)reg[inst.src];
            } else {
                reg[inst.dst] = (uint32_t)reg[inst.src];
            }
            break;
        case BPF_ALU | BPF_ARSH | BPF_K:
            reg[inst.dst] = (uint32_t)((int32_t)reg[inst.dst] >> (inst.imm & 31));
            break;
        case BPF_ALU | BPF_ARSH | BPF_X:
            reg[inst.dst] = (uint32_t)((int32_t)reg[inst.dst] >> (reg[inst.src] & 31));
            break;

        case BPF_ALU | BPF_END | BPF_K:
            if (inst.imm == 16) {
                reg[inst.dst] = htole16(reg[inst.dst]);
            } else if (inst.imm == 32) {
                reg[inst.dst] = htole32(reg[inst.dst]);
            } else if (inst.imm == 64) {
                reg[inst.dst] = htole64(reg[inst.dst]);
            }
            break;
        case BPF_ALU | BPF_END | BPF_X:
            if (inst.imm == 16) {
                reg[inst.dst] = htobe16(reg[inst.dst]);
            } else if (inst.imm == 32) {
                reg[inst.dst] = htobe32(reg[inst.dst]);
            } else if (inst.imm == 64) {
                reg[inst.dst] = htobe64(reg[inst.dst]);
            }
            break;

        case BPF_ALU64 | BPF_ADD | BPF_K:
            reg[inst.dst] += inst.imm;
            break;
        case BPF_ALU64 | BPF_ADD | BPF_X:
            reg[inst.dst] += reg[inst.src];
            break;
        case BPF_ALU64 | BPF_SUB | BPF_K:
            reg[inst.dst] -= inst.imm;
            break;
        case BPF_ALU64 | BPF_SUB | BPF_X:
            reg[inst.dst] -= reg[inst.src];
            break;
        case BPF_ALU64 | BPF_MUL | BPF_K:
            reg[inst.dst] *= inst.imm;
            break;
        case BPF_ALU64 | BPF_MUL | BPF_X:
            reg[inst.dst] *= reg[inst.src];
            break;
        case BPF_ALU64 | BPF_DIV | BPF_K:
            if (inst.offset == 1) {
                reg[inst.dst] = inst.imm ? (uint64_t)((int64_t)reg[inst.dst] / (int64_t)inst.imm) : 0;
            } else {
                reg[inst.dst] = inst.imm ? reg[inst.dst] / (uint64_t)inst.imm : 0;
            }
            break;
        case BPF_ALU64 | BPF_DIV | BPF_X:
            reg[inst.dst] = reg[inst.src] == 0 ? 0 : reg[inst.dst] / reg[inst.src];
            break;
        case BPF_ALU64 | BPF_OR | BPF_K:
            reg[inst.dst] |= inst.imm;
            break;
        case BPF_ALU64 | BPF_OR | BPF_X:
            reg[inst.dst] |= reg[inst.src];
            break;
        case BPF_ALU64 | BPF_AND | BPF_K:
            reg[inst.dst] &= inst.imm;
            break;
        case BPF_ALU64 | BPF_AND | BPF_X:
            reg[inst.dst] &= reg[inst.src];
            break;
        case BPF_ALU64 | BPF_LSH | BPF_K:
            reg[inst.dst] <<= SHIFT_MASK_64_BIT(inst.imm);
            break;
        case BPF_ALU64 | BPF_LSH | BPF_X:
            reg[inst.dst] <<= SHIFT_MASK_64_BIT(reg[inst.src]);
            break;
        case BPF_ALU64 | BPF_RSH | BPF_K:
            reg[inst.dst] >>= (inst.imm & 63);
            break;
        case BPF_ALU64 | BPF_RSH | BPF_X:
            reg[inst.dst] >>= (reg[inst.src] & 63);
            break;
        case BPF_ALU64 | BPF_NEG:
            reg[inst.dst] = -(int64_t)reg[inst.dst];
            break;
        case BPF_ALU64 | BPF_MOD | BPF_K:
            reg[inst.dst] = inst.imm ? reg[inst.dst] % (uint64_t)inst.imm : reg[inst.dst];
            break;
        case BPF_ALU64 | BPF_MOD | BPF_X:
            reg[inst.dst] = reg[inst.src] == 0 ? reg[inst.dst] : reg[inst.dst] % reg[inst.src];
            break;
        case BPF_ALU64 | BPF_XOR | BPF_K:
            reg[inst.dst] ^= inst.imm;
            break;
        case BPF_ALU64 | BPF_XOR | BPF_X:
            reg[inst.dst] ^= reg[inst.src];
            break;
        case BPF_ALU64 | BPF_MOV | BPF_K:
            reg[inst.dst] = inst.imm;
            break;
        case BPF_ALU64 | BPF_MOVSX | BPF_X:
            switch (inst.offset) {
            case 8:
                reg[inst.dst] = (int64_t)(int8_t)reg[inst.src];
                break;
            case 16:
                reg[inst.dst] = (int64_t)(int16_t)reg[inst.src];
                break;
            case 32:
                reg[inst.dst] = (int64_t)(int32_t)reg[inst.src];
                break;
            default:
                reg[inst.dst] = reg[inst.src];
                break;
            }
            break;
        case BPF_ALU64 | BPF_ARSH | BPF_K:
            reg[inst.dst] = (int64_t)reg[inst.dst] >> (inst.imm & 63);
            break;
        case BPF_ALU64 | BPF_ARSH | BPF_X:
            reg[inst.dst] = (int64_t)reg[inst.dst] >> (reg[inst.src] & 63);
            break;
        case BPF_ALU64 | BPF_END | BPF_K:
            if (inst.imm == 16) {
                reg[inst.dst] = bswap16(reg[inst.dst]);
            } else if (inst.imm == 32) {
                reg[inst.dst] = bswap32(reg[inst.dst]);
            } else if (inst.imm == 64) {
                reg[inst.dst] = bswap64(reg[inst.dst]);
            }
            break;

            /*
             * HACK runtime bounds check
             *
             * Needed since we don't have a verifier yet.
             */
#define BOUNDS_CHECK_LOAD(size)                                                                          \
    do {                                                                                                 \
        if (!bounds_check(vm, (char*)reg[inst.src] + inst.offset, size, "load", cur_pc, mem, mem_len,   \
                          stack)) {                                                                      \
            return -1;                                                                                   \
        }                                                                                                \
    } while (0)
#define BOUNDS_CHECK_STORE(size)                                                                         \
    do {                                                                                                 \
        if (!bounds_check(vm, (char*)reg[inst.dst] + inst.offset, size, "store", cur_pc, mem, mem_len,  \
                          stack)) {                                                                      \
            return -1;                                                                                   \
        }                                                                                                \
    } while (0)

        case BPF_LDX | BPF_MEM | BPF_W:
            BOUNDS_CHECK_LOAD(4);
            reg[inst.dst] = *(uint32_t*)(uintptr_t)(reg[inst.src] + inst.offset);
            break;
        case BPF_LDX | BPF_MEM | BPF_H:
            BOUNDS_CHECK_LOAD(2);
            reg[inst.dst] = *(uint16_t*)(uintptr_t)(reg[inst.src] + inst.offset);
            break;
        case BPF_LDX | BPF_MEM | BPF_B:
            BOUNDS_CHECK_LOAD(1);
            reg[inst.dst] = *(uint8_t*)(uintptr_t)(reg[inst.src] + inst.offset);
            break;
        case BPF_LDX | BPF_MEM | BPF_DW:
            BOUNDS_CHECK_LOAD(8);
            reg[inst.dst] = *(uint64_t*)(uintptr_t)(reg[inst.src] + inst.offset);
            break;
        case BPF_LDX | BPF_MEMSX | BPF_W:
            BOUNDS_CHECK_LOAD(4);
            reg[inst.dst] = (int64_t)*(int32_t*)(uintptr_t)(reg[inst.src] + inst.offset);
            break;
        case BPF_LDX | BPF_MEMSX | BPF_H:
            BOUNDS_CHECK_LOAD(2);
            reg[inst.dst] = (int64_t)*(int16_t*)(uintptr_t)(reg[inst.src] + inst.offset);
            break;
        case BPF_LDX | BPF_MEMSX | BPF_B:
            BOUNDS_CHECK_LOAD(1);
            reg[inst.dst] = (int64_t)*(int8_t*)(uintptr_t)(reg[inst.src] + inst.offset);
            break;

        case BPF_ST | BPF_MEM | BPF_W:
            BOUNDS_CHECK_STORE(4);
            *(uint32_t*)(uintptr_t)(reg[inst.dst] + inst.offset) = inst.imm;
            break;
        case BPF_ST | BPF_MEM | BPF_H:
            BOUNDS_CHECK_STORE(2);
            *(uint16_t*)(uintptr_t)(reg[inst.dst] + inst.offset) = inst.imm;
            break;
        case BPF_ST | BPF_MEM | BPF_B:
            BOUNDS_CHECK_STORE(1);
            *(uint8_t*)(uintptr_t)(reg[inst.dst] + inst.offset) = inst.imm;
            break;
        case BPF_ST | BPF_MEM | BPF_DW:
            BOUNDS_CHECK_STORE(8);
            *(uint64_t*)(uintptr_t)(reg[inst.dst] + inst.offset) = inst.imm;
            break;

        case BPF_STX | BPF_MEM | BPF_W:
            BOUNDS_CHECK_STORE(4);
            *(uint32_t*)(uintptr_t)(reg[inst.dst] + inst.offset) = reg[inst.src];
            break;
        case BPF_STX | BPF_MEM | BPF_H:
            BOUNDS_CHECK_STORE(2);
            *(uint16_t*)(uintptr_t)(reg[inst.dst] + inst.offset) = reg[inst.src];
            break;
        case BPF_STX | BPF_MEM | BPF_B:
            BOUNDS_CHECK_STORE(1);
            *(uint8_t*)(uintptr_t)(reg[inst.dst] + inst.offset) = reg[inst.src];
            break;
        case BPF_STX | BPF_MEM | BPF_DW:
            BOUNDS_CHECK_STORE(8);
            *(uint64_t*)(uintptr_t)(reg[inst.dst] + inst.offset) = reg[inst.src];
            break;

        case BPF_LD | BPF_IMM | BPF_DW:
            reg[inst.dst] = (uint32_t)inst.imm | ((uint64_t)insts[pc++].imm << 32);
            break;

        case BPF_JMP | BPF_JA:
            if (inst.offset < 0 && ++insn_cnt > vm->max_insns) {
                return -1;
            }
            pc += inst.offset;
            break;
        case BPF_JMP | BPF_JEQ | BPF_K:
            if (reg[inst.dst] == (uint64_t)(int64_t)inst.imm) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JEQ | BPF_X:
            if (reg[inst.dst] == reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JGT | BPF_K:
            if (reg[inst.dst] > (uint64_t)(int64_t)inst.imm) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JGT | BPF_X:
            if (reg[inst.dst] > reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JGE | BPF_K:
            if (reg[inst.dst] >= (uint64_t)(int64_t)inst.imm) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JGE | BPF_X:
            if (reg[inst.dst] >= reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JLT | BPF_K:
            if (reg[inst.dst] < (uint64_t)(int64_t)inst.imm) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JLT | BPF_X:
            if (reg[inst.dst] < reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JLE | BPF_K:
            if (reg[inst.dst] <= (uint64_t)(int64_t)inst.imm) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JLE | BPF_X:
            if (reg[inst.dst] <= reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JSET | BPF_K:
            if (reg[inst.dst] & inst.imm) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JSET | BPF_X:
            if (reg[inst.dst] & reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JNE | BPF_K:
            if (reg[inst.dst] != (uint64_t)(int64_t)inst.imm) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JNE | BPF_X:
            if (reg[inst.dst] != reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JSGT | BPF_K:
            if ((int64_t)reg[inst.dst] > inst.imm) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JSGT | BPF_X:
            if ((int64_t)reg[inst.dst] > (int64_t)reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JSGE | BPF_K:
            if ((int64_t)reg[inst.dst] >= inst.imm) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JSGE | BPF_X:
            if ((int64_t)reg[inst.dst] >= (int64_t)reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JSLT | BPF_K:
            if ((int64_t)reg[inst.dst] < inst.imm) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JSLT | BPF_X:
            if ((int64_t)reg[inst.dst] < (int64_t)reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JSLE | BPF_K:
            if ((int64_t)reg[inst.dst] <= inst.imm) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_JSLE | BPF_X:
            if ((int64_t)reg[inst.dst] <= (int64_t)reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case BPF_JMP | BPF_EXIT:
            /* reg[11] = {0} at entry, so r0 reads as zero if never written */
            *bpf_return_value = reg[0];
            return 0;
        case BPF_JMP | BPF_CALL:
            if (inst.imm < 0 || inst.imm >= MAX_EXT_FUNCS || !vm->ext_funcs[inst.imm]) {
                vm->error_printf(stderr, "uBPF error: unknown helper function %d\n", inst.imm);
                return -1;
            }
            reg[0] = vm->ext_funcs[inst.imm](reg[1], reg[2], reg[3], reg[4], reg[5]);
            break;
        }
    }
}

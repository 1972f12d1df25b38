/* tslint:disable */
/* eslint-disable */

/**
 * Runs the ADMM on a small synthetic instance and returns the residual
 * trace and the final commitment grid.
 */
export function admm_run(units: number, horizon: number, seed: bigint, mode: string, rho: number, max_iter: number): string;

/**
 * Trains the variational solver on the same micro-QUBO and reports the
 * gradient-norm trace, expectations and the sample histogram.
 */
export function dvqe_micro(q_y: number, q_u: number, q_v: number, anchor_y: number, anchor_u: number, anchor_v: number, eta: number, rho: number, learning_rate: number, iterations: number, seed: bigint): string;

/**
 * Energies of all eight `(y, u, v)` assignments of one micro-QUBO, its
 * brute-force optimum and its hardness score.
 */
export function micro_landscape(q_y: number, q_u: number, q_v: number, anchor_y: number, anchor_u: number, anchor_v: number, eta: number, rho: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly admm_run: (a: number, b: number, c: bigint, d: number, e: number, f: number, g: number) => [number, number];
    readonly dvqe_micro: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: bigint) => [number, number];
    readonly micro_landscape: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number];
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;

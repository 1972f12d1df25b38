/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const admm_run: (a: number, b: number, c: bigint, d: number, e: number, f: number, g: number) => [number, number];
export const dvqe_micro: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: bigint) => [number, number];
export const micro_landscape: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number];
export const __externref_table_alloc: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;

/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_begin: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const demo_blends: (a: number) => [number, number];
export const demo_directionNames: (a: number) => [number, number];
export const demo_editInverted: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_isDone: (a: number) => number;
export const demo_iteration: (a: number) => number;
export const demo_new: () => [number, number, number];
export const demo_resolution: (a: number) => number;
export const demo_sample: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_step: (a: number, b: number) => [number, number, number];
export const __externref_table_alloc: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_start: () => void;

/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Start inverting `"shifted"` or `"checkerboard"`; returns the target RGBA.
     */
    begin(target: string, seed: number, iters: number): Uint8Array;
    /**
     * Iterations at which the anchored model was blended so far.
     */
    blends(): Uint32Array;
    directionNames(): string[];
    /**
     * RGBA of the current reconstruction edited along `direction`.
     */
    editInverted(direction: number, strength: number): Uint8Array;
    isDone(): boolean;
    iteration(): number;
    constructor();
    resolution(): number;
    /**
     * RGBA of sample `seed` edited along `direction`.
     */
    sample(seed: number, direction: number, strength: number): Uint8Array;
    /**
     * Run up to `n` iterations; returns the latest pixel MSE or NaN.
     */
    step(n: number): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_begin: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly demo_blends: (a: number) => [number, number];
    readonly demo_directionNames: (a: number) => [number, number];
    readonly demo_editInverted: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_isDone: (a: number) => number;
    readonly demo_iteration: (a: number) => number;
    readonly demo_new: () => [number, number, number];
    readonly demo_resolution: (a: number) => number;
    readonly demo_sample: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_step: (a: number, b: number) => [number, number, number];
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_drop_slice: (a: number, b: number) => void;
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

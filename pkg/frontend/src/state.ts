import type { Pose7DoF, VisibilityLevel } from "./types";

// Per-keypress increments; one nudge moves exactly one field.
export const NUDGE_STEPS = {
  x: 0.1,
  y: 0.1,
  z: 0.05,
  l: 0.05,
  w: 0.05,
  h: 0.05,
  yaw: Math.PI / 180, // 1 degree
} as const;

export type PoseField = keyof typeof NUDGE_STEPS;

export const MIN_DIMENSION = 0.1;
export const DEFAULT_VEHICLE: Pick<Pose7DoF, "l" | "w" | "h"> = {
  l: 4.5,
  w: 1.8,
  h: 1.5,
};

export function wrapYaw(yaw: number): number {
  let wrapped = (yaw + Math.PI) % (2 * Math.PI);
  if (wrapped <= 0) {
    wrapped += 2 * Math.PI;
  }
  return wrapped - Math.PI;
}

/** Clamp a pose so it always satisfies the backend invariants. */
export function clampPose(pose: Pose7DoF): Pose7DoF {
  return {
    x: pose.x,
    y: pose.y,
    z: Math.max(0, pose.z),
    l: Math.max(MIN_DIMENSION, pose.l),
    w: Math.max(MIN_DIMENSION, pose.w),
    h: Math.max(MIN_DIMENSION, pose.h),
    yaw: wrapYaw(pose.yaw),
  };
}

export interface EditorState {
  frame: number;
  vehicleId: string | null;
  pose: Pose7DoF | null;
  visibility: Record<string, VisibilityLevel>;
  note: string;
  dirty: boolean;
  revision: number;
  undoStack: Pose7DoF[];
  conflict: boolean;
}

export function initialState(frame = 0): EditorState {
  return {
    frame,
    vehicleId: null,
    pose: null,
    visibility: {},
    note: "",
    dirty: false,
    revision: 0,
    undoStack: [],
    conflict: false,
  };
}

export function selectVehicle(
  state: EditorState,
  vehicleId: string,
  pose: Pose7DoF,
  cameras: string[],
  visibility?: Record<string, VisibilityLevel>,
  note = "",
): EditorState {
  const filled: Record<string, VisibilityLevel> = {};
  for (const cam of cameras) {
    filled[cam] = visibility?.[cam] ?? "full";
  }
  return {
    ...state,
    vehicleId,
    pose: clampPose(pose),
    visibility: filled,
    note,
    dirty: false,
    undoStack: [],
    conflict: false,
  };
}

/** Place a fresh default-sized vehicle at a ground point (z = h/2). */
export function newVehicleAt(
  state: EditorState,
  vehicleId: string,
  ground: { x: number; y: number },
  cameras: string[],
): EditorState {
  const pose: Pose7DoF = {
    x: ground.x,
    y: ground.y,
    z: DEFAULT_VEHICLE.h / 2,
    ...DEFAULT_VEHICLE,
    yaw: 0,
  };
  const next = selectVehicle(state, vehicleId, pose, cameras);
  return { ...next, dirty: true };
}

export function nudge(state: EditorState, field: PoseField, direction: 1 | -1): EditorState {
  if (!state.pose) {
    return state;
  }
  const updated = { ...state.pose };
  updated[field] += NUDGE_STEPS[field] * direction;
  return {
    ...state,
    pose: clampPose(updated),
    dirty: true,
    undoStack: [...state.undoStack, state.pose],
  };
}

export function undo(state: EditorState): EditorState {
  if (state.undoStack.length === 0 || !state.pose) {
    return state;
  }
  const stack = [...state.undoStack];
  const previous = stack.pop()!;
  return { ...state, pose: previous, undoStack: stack, dirty: true };
}

/** Flat-ground helper: rest the box bottom on z = 0. */
export function snapToGround(state: EditorState): EditorState {
  if (!state.pose) {
    return state;
  }
  const pose = { ...state.pose, z: state.pose.h / 2 };
  return { ...state, pose, dirty: true, undoStack: [...state.undoStack, state.pose] };
}

export function setVisibility(
  state: EditorState,
  camera: string,
  level: VisibilityLevel,
): EditorState {
  return {
    ...state,
    visibility: { ...state.visibility, [camera]: level },
    dirty: true,
  };
}

export function markSaved(state: EditorState, revision: number): EditorState {
  return { ...state, dirty: false, revision, conflict: false };
}

export function markConflict(state: EditorState, serverRevision: number): EditorState {
  return { ...state, conflict: true, revision: serverRevision };
}

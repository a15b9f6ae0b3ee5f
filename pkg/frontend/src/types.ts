export interface Pose7DoF {
  x: number;
  y: number;
  z: number;
  l: number;
  w: number;
  h: number;
  yaw: number;
}

export type VisibilityLevel = "full" | "partial" | "none";

export interface AnnotationRecord {
  frame: number;
  vehicle_id: string;
  pose: Pose7DoF;
  visibility: Record<string, VisibilityLevel>;
  note: string;
  timestamp: string;
}

export interface ProjectionEntry {
  behind_camera: boolean;
  corners: [number, number][] | null;
  box: [number, number, number, number] | null;
}

export type ProjectionResponse = Record<string, ProjectionEntry>;

export interface Detection {
  camera_id: string;
  box: [number, number, number, number];
  score: number;
  class: string;
}

export interface CalibrationCamera {
  id: string;
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

export interface FramesIndex {
  frames: number[];
  cameras: string[];
  images_available: boolean;
}

export interface AnnotationsFile {
  revision: number;
  annotations: AnnotationRecord[];
}
